#include "doctest.h"

#include <cstring>

#include "gapforge/checkpoint.hpp"
#include "gapforge/errors.hpp"
#include "gapforge/gan.hpp"

using namespace gapforge;

namespace {

ModelParams random_model(std::uint64_t seed) {
  SplittableRng rng(seed, 0);
  return init_model({{2, 7, true, Activation::kRelu},
                     {7, 5, true, Activation::kRelu},
                     {5, 1, false, Activation::kIdentity}},
                    rng);
}

// Minimal independent parser: walks the byte layout directly without any
// checkpoint.cpp machinery.
struct ParsedHeader {
  std::uint32_t version = 0;
  std::vector<std::array<std::uint32_t, 3>> layers;  // in, out, flags
  std::size_t tensor_doubles = 0;
};

ParsedHeader independent_parse(const std::vector<std::byte>& bytes) {
  ParsedHeader h;
  REQUIRE(bytes.size() >= 16);
  REQUIRE(std::memcmp(bytes.data(), "GAPCKPT1", 8) == 0);
  auto u32_at = [&](std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(
               bytes[off + i]))
           << (8 * i);
    return v;
  };
  h.version = u32_at(8);
  const std::uint32_t n = u32_at(12);
  std::size_t off = 16;
  for (std::uint32_t l = 0; l < n; ++l, off += 12)
    h.layers.push_back({u32_at(off), u32_at(off + 4), u32_at(off + 8)});
  h.tensor_doubles = (bytes.size() - off) / 8;
  return h;
}

}  // namespace

TEST_CASE("serialize/deserialize round-trips bit-exactly") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ModelParams p = random_model(seed);
    // perturb running stats away from defaults
    p.layers[0].bn_running_mean[1] = 0.25;
    p.layers[0].bn_running_var[2] = 3.5;
    const auto bytes = serialize_params(p);
    const ModelParams q = deserialize_params(bytes);
    CHECK(p == q);
    CHECK(serialize_params(q) == bytes);
  }
}

TEST_CASE("truncated payload is rejected") {
  const auto bytes = serialize_params(random_model(1));
  for (std::size_t cut : {std::size_t{4}, std::size_t{17}, bytes.size() - 1}) {
    std::vector<std::byte> trunc(bytes.begin(), bytes.begin() + cut);
    CHECK_THROWS_AS(deserialize_params(trunc), IoError);
  }
}

TEST_CASE("bad magic and version mismatch are rejected") {
  auto bytes = serialize_params(random_model(2));
  auto bad_magic = bytes;
  bad_magic[0] = std::byte{'X'};
  CHECK_THROWS_AS(deserialize_params(bad_magic), IoError);

  auto bad_version = bytes;
  bad_version[8] = std::byte{9};
  CHECK_THROWS_AS(deserialize_params(bad_version), IoError);
}

TEST_CASE("dim-chain violations are rejected") {
  auto bytes = serialize_params(random_model(3));
  // corrupt the second layer's in_dim (header entry at 16 + 12)
  bytes[16 + 12] = std::byte{200};
  CHECK_THROWS_AS(deserialize_params(bytes), IoError);
}

TEST_CASE("header dims parse to matching layer specs (independent parser)") {
  SplittableRng rng(4, 0);
  ModelParams p = init_model({{2, 128, true, Activation::kRelu},
                              {128, 1, false, Activation::kIdentity}},
                             rng);
  const auto bytes = serialize_params(p);
  const ParsedHeader h = independent_parse(bytes);
  CHECK(h.version == 1);
  REQUIRE(h.layers.size() == 2);
  CHECK(h.layers[0] == std::array<std::uint32_t, 3>{2, 128, 0b001});   // bn, relu
  CHECK(h.layers[1] == std::array<std::uint32_t, 3>{128, 1, 0b100});   // identity
  // tensor payload: layer0 W + 4 bn vectors (no bias under bn), layer1 W/b
  const std::size_t expect = (2 * 128 + 4 * 128) + (128 + 1);
  CHECK(h.tensor_doubles == expect);
}

TEST_CASE("file save/load round-trip") {
  const ModelParams p = random_model(5);
  const auto path = std::filesystem::temp_directory_path() / "gapforge-ckpt-test.ckpt";
  save_params(path, p);
  const ModelParams q = load_params(path);
  CHECK(p == q);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_params(path), IoError);
}

TEST_CASE("disc payload carries parameters and optimizer state") {
  SplittableRng rng(6, 0);
  GanHyper h;
  h.hidden = 9;
  ModelParams d = make_discriminator(h, rng);
  AdamState opt = AdamState::init(d, 3e-4, 0.6, 0.99, 1e-7);
  opt.step = 41;
  visit_grads(opt.m, [&](double& v) { v = rng.normal(); });
  visit_grads(opt.v, [&](double& v) { v = std::abs(rng.normal()); });

  const auto payload = serialize_disc_payload(d, opt);
  ModelParams d2;
  AdamState opt2;
  deserialize_disc_payload(payload, d2, opt2);
  CHECK(d == d2);
  CHECK(opt2.step == 41);
  CHECK(opt2.lr == 3e-4);
  CHECK(opt2.beta1 == 0.6);
  CHECK(serialize_disc_payload(d2, opt2) == payload);
}
