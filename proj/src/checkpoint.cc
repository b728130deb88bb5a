// Copyright 2026 The Unitmatch Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "unitmatch/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>

#include "unitmatch/error.h"

namespace unitmatch {

namespace {

constexpr char kMagic[4] = {'U', 'M', 'C', 'K'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw DataError("truncated checkpoint");
  return value;
}

void describe(const EncoderParams& params, const std::string& prefix,
              nlohmann::json& tensors) {
  params.for_each([&](const std::string& name, const Matrix& m) {
    tensors.push_back({{"name", prefix + name}, {"rows", m.rows()}, {"cols", m.cols()}});
  });
}

void write_tensors(std::ostream& out, const EncoderParams& params) {
  params.for_each([&](const std::string&, const Matrix& m) {
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
  });
}

void read_tensors(std::istream& in, const nlohmann::json& tensors, std::size_t& cursor,
                  const std::string& prefix, EncoderParams& params) {
  params.for_each([&](const std::string& name, Matrix& m) {
    if (cursor >= tensors.size()) throw DataError("checkpoint is missing " + prefix + name);
    const auto& t = tensors[cursor++];
    if (t.at("name").get<std::string>() != prefix + name ||
        t.at("rows").get<Eigen::Index>() != m.rows() ||
        t.at("cols").get<Eigen::Index>() != m.cols()) {
      throw DataError("checkpoint tensor mismatch at " + prefix + name);
    }
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
    if (!in) throw DataError("truncated checkpoint data at " + prefix + name);
  });
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto& cfg = ckpt.params.config;
  if (cfg.vocab_size != ckpt.vocab.size()) {
    throw DataError("checkpoint vocabulary does not match the encoder");
  }
  nlohmann::json header;
  header["version"] = kCheckpointVersion;
  header["encoder"] = {{"vocab_size", cfg.vocab_size},
                       {"dim", cfg.dim},
                       {"blocks", cfg.blocks},
                       {"max_len", cfg.max_len}};
  header["vocabulary"] = ckpt.vocab.tokens();
  header["metadata"] = ckpt.metadata;
  nlohmann::json tensors = nlohmann::json::array();
  describe(ckpt.params, "", tensors);
  if (ckpt.optimizer) {
    header["optimizer"] = {{"step", ckpt.optimizer->step}};
    describe(ckpt.optimizer->first_moment, "adam.m/", tensors);
    describe(ckpt.optimizer->second_moment, "adam.v/", tensors);
  }
  header["tensors"] = std::move(tensors);
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(out, kCheckpointVersion);
  write_pod<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_tensors(out, ckpt.params);
  if (ckpt.optimizer) {
    write_tensors(out, ckpt.optimizer->first_moment);
    write_tensors(out, ckpt.optimizer->second_moment);
  }
  if (!out) throw DataError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError(path.string() + " is not a checkpoint");
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto length = read_pod<std::uint64_t>(in);
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw DataError("truncated checkpoint header");

  try {
    const auto header = nlohmann::json::parse(text);
    if (header.at("version").get<std::uint32_t>() != version) {
      throw DataError("checkpoint header version mismatch");
    }
    EncoderConfig cfg;
    const auto& enc = header.at("encoder");
    cfg.vocab_size = enc.at("vocab_size").get<std::size_t>();
    cfg.dim = enc.at("dim").get<std::size_t>();
    cfg.blocks = enc.at("blocks").get<std::size_t>();
    cfg.max_len = enc.at("max_len").get<std::size_t>();

    Checkpoint ckpt{Vocabulary(header.at("vocabulary").get<std::vector<std::string>>()),
                    EncoderParams::shaped(cfg), std::nullopt,
                    header.value("metadata", nlohmann::json::object())};
    if (ckpt.vocab.size() != cfg.vocab_size) {
      throw DataError("checkpoint vocabulary size does not match the encoder");
    }
    const auto& tensors = header.at("tensors");
    std::size_t cursor = 0;
    read_tensors(in, tensors, cursor, "", ckpt.params);
    if (header.contains("optimizer")) {
      OptimizerState opt{EncoderParams::shaped(cfg), EncoderParams::shaped(cfg),
                         header["optimizer"].at("step").get<std::uint64_t>()};
      read_tensors(in, tensors, cursor, "adam.m/", opt.first_moment);
      read_tensors(in, tensors, cursor, "adam.v/", opt.second_moment);
      ckpt.optimizer = std::move(opt);
    }
    if (cursor != tensors.size()) throw DataError("checkpoint lists unknown tensors");
    check_params(ckpt.params);
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint header: " + std::string(e.what()));
  }
}

}  // namespace unitmatch
