#pragma once

#include <optional>
#include <string>

#include "temp/model/extractor.hpp"

namespace temp::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Extractor extractor;
  std::optional<ClassifierHead> head;
};

/// Byte layout is documented in docs/FILE_FORMATS.md.
void save_checkpoint(const std::string& path, const Extractor& extractor, const ClassifierHead* head = nullptr);
/// Restores theta, theta0, BN running statistics and the head. The loaded
/// parameter set is masked to BN gamma/beta.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace temp::model
