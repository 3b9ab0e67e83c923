#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "gapforge/nn.hpp"

namespace gapforge {

// Model checkpoint wire format, version 1:
//   magic "GAPCKPT1" (8 bytes)
//   format version   u32 LE
//   layer count      u32 LE
//   per layer: in_dim u32, out_dim u32, flags u32
//              (bit0 = batchnorm, bits1-2 = activation:
//               0 relu, 1 sigmoid, 2 identity)
//   tensors as little-endian float64, per layer in declared order:
//     W row-major, b (absent on batchnorm layers, which carry no linear
//     bias), then for batchnorm layers
//     bn_gamma, bn_beta, bn_running_mean, bn_running_var.
inline constexpr char kCheckpointMagic[8] = {'G', 'A', 'P', 'C',
                                             'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::byte> serialize_params(const ModelParams& params);

// Throws IoError on bad magic, version mismatch, truncation, or a
// dim-chain violation. `consumed`, when given, receives the number of
// bytes the checkpoint occupied (the payload may carry trailing data).
ModelParams deserialize_params(std::span<const std::byte> bytes,
                               std::size_t* consumed = nullptr);

void save_params(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_params(const std::filesystem::path& path);

// Swap message payload: a discriminator checkpoint followed by its Adam
// state (step u64 LE, lr/beta1/beta2/eps f64 LE, then the m and v moment
// tensors in trainable order).
std::vector<std::byte> serialize_disc_payload(const ModelParams& params,
                                              const AdamState& opt);
void deserialize_disc_payload(std::span<const std::byte> bytes,
                              ModelParams& params, AdamState& opt);

}  // namespace gapforge
