#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

#include "hiertax/strategies.hpp"

namespace hiertax {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Versioned little-endian model image:
///   "HTXM" u32 version, u64 taxonomy fingerprint, u8 strategy, u32 input dim,
///   u8 dense backbone, u32 n + n*u32 widths, u32 hidden, u8 dense feed,
///   u64 init seed, u32 param count, then per param
///   u32 name length, name, u32 rows, u32 cols, rows*cols f64.
std::string encode_checkpoint(const Model& m);

/// Rebuilds the model against `t`; throws ValidationError on a corrupt image
/// or when `t` is not the taxonomy the model was trained on.
Model decode_checkpoint(std::string_view bytes, std::shared_ptr<const Taxonomy> t);

void save_checkpoint(const std::string& path, const Model& m);
Model load_checkpoint(const std::string& path, std::shared_ptr<const Taxonomy> t);

} // namespace hiertax
