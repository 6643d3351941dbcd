#pragma once

#include <cstdint>
#include <string>

namespace kcf {

// Shared on-disk container: 8-byte magic, a kind tag, then a kind-specific
// payload. All model files are byte-deterministic functions of the model.
enum class ModelKind : std::uint32_t {
  infae = 0,
  ease = 1,
  bias = 2,
  poprec = 3,
};

ModelKind peek_model_kind(const std::string& path);
const char* model_kind_name(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

}  // namespace kcf
