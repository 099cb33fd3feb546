// Copyright 2026 The gersp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <json.hpp>
#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "gersp/core/errors.hpp"
#include "gersp/model/encoder.hpp"
#include "gersp/trainer/config.hpp"

namespace gersp {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

/// Binary tensor container:
///   magic "GERSPCKP" | u32 manifest length | JSON manifest |
///   concatenated f32 little-endian payloads | u32 CRC32 of all preceding bytes.
/// Tensor offsets in the manifest are relative to the payload section.
inline constexpr char kCheckpointMagic[8] = {'G', 'E', 'R', 'S', 'P', 'C', 'K', 'P'};
inline constexpr int kCheckpointVersion = 1;

struct TensorEntry {
  std::string name;
  std::vector<std::size_t> shape;
  std::string dtype = "f32";
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
};

struct Checkpoint {
  int format_version = kCheckpointVersion;
  TrainingConfig config;
  std::vector<TensorEntry> tensors;
  nlohmann::json metadata;
  std::uint32_t crc = 0;
};

namespace detail {

inline void to_json(nlohmann::json& j, const TensorEntry& t) {
  j = nlohmann::json{{"name", t.name},
                     {"shape", t.shape},
                     {"dtype", t.dtype},
                     {"offset", t.offset},
                     {"length", t.length}};
}

/// Serialized view of the student: downstream loaders read only `backbone/`;
/// the projector and predictor ride along under `nonessential/` so
/// pre-training can resume.
template <typename Real>
std::vector<std::pair<std::string, const Tensor<Real>*>> exported_tensors(
    EncoderBundle<Real>& bundle) {
  std::vector<std::pair<std::string, const Tensor<Real>*>> out;
  std::vector<ParamRef<Real>> params;
  bundle.student_backbone.collect_params("backbone", params);
  for (const auto& p : params) out.emplace_back(p.name, p.value);
  std::vector<StateRef<Real>> state;
  bundle.student_backbone.collect_state("backbone", state);
  for (const auto& s : state) out.emplace_back(s.name, s.value);

  params.clear();
  bundle.student_projector.collect_params("nonessential/projector", params);
  bundle.student_predictor.collect_params("nonessential/predictor", params);
  for (const auto& p : params) out.emplace_back(p.name, p.value);
  return out;
}

}  // namespace detail

template <typename Real>
Checkpoint save_checkpoint(EncoderBundle<Real>& bundle, const TrainingConfig& config,
                           const nlohmann::json& metadata, const std::string& path) {
  const auto tensors = detail::exported_tensors(bundle);

  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.metadata = metadata;
  ckpt.metadata["queue_persisted"] = false;  // negative queue restarts empty

  std::vector<float> payload;
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : tensors) {
    TensorEntry e;
    e.name = name;
    e.shape = tensor->shape();
    e.offset = offset;
    e.length = tensor->numel() * sizeof(float);
    offset += e.length;
    ckpt.tensors.push_back(e);
    for (std::size_t i = 0; i < tensor->numel(); ++i)
      payload.push_back(static_cast<float>((*tensor)[i]));
  }

  nlohmann::json manifest;
  manifest["format_version"] = kCheckpointVersion;
  manifest["config"] = config;
  manifest["metadata"] = ckpt.metadata;
  manifest["tensors"] = nlohmann::json::array();
  for (const auto& e : ckpt.tensors) {
    nlohmann::json je;
    detail::to_json(je, e);
    manifest["tensors"].push_back(je);
  }
  const std::string manifest_str = manifest.dump();

  std::vector<char> blob;
  blob.insert(blob.end(), kCheckpointMagic, kCheckpointMagic + 8);
  const std::uint32_t mlen = static_cast<std::uint32_t>(manifest_str.size());
  blob.insert(blob.end(), reinterpret_cast<const char*>(&mlen),
              reinterpret_cast<const char*>(&mlen) + 4);
  blob.insert(blob.end(), manifest_str.begin(), manifest_str.end());
  blob.insert(blob.end(), reinterpret_cast<const char*>(payload.data()),
              reinterpret_cast<const char*>(payload.data()) + payload.size() * sizeof(float));

  std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(blob.data()),
            static_cast<uInt>(blob.size())));
  blob.insert(blob.end(), reinterpret_cast<const char*>(&crc),
              reinterpret_cast<const char*>(&crc) + 4);
  ckpt.crc = crc;

  // write-temp-then-rename so a crash never leaves a half-written file
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) {
      std::filesystem::remove(tmp);
      throw IoError("checkpoint write failed: " + path);
    }
  }
  std::filesystem::rename(tmp, path);
  return ckpt;
}

namespace detail {

struct RawCheckpoint {
  Checkpoint meta;
  std::vector<char> payload;
};

inline RawCheckpoint read_raw_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::vector<char> blob((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());

  if (blob.size() < 16)
    throw CheckpointError(CheckpointError::Code::truncated,
                          "checkpoint too small: " + path);
  if (std::memcmp(blob.data(), kCheckpointMagic, 8) != 0)
    throw CheckpointError(CheckpointError::Code::bad_magic,
                          "bad checkpoint magic: " + path);

  const std::uint32_t stored_crc = [&] {
    std::uint32_t v;
    std::memcpy(&v, blob.data() + blob.size() - 4, 4);
    return v;
  }();
  const std::uint32_t actual_crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(blob.data()),
            static_cast<uInt>(blob.size() - 4)));
  if (stored_crc != actual_crc)
    throw CheckpointError(CheckpointError::Code::checksum_mismatch,
                          "checkpoint CRC mismatch: " + path);

  std::uint32_t mlen;
  std::memcpy(&mlen, blob.data() + 8, 4);
  if (12 + static_cast<std::size_t>(mlen) + 4 > blob.size())
    throw CheckpointError(CheckpointError::Code::truncated,
                          "checkpoint manifest extends past file end: " + path);

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(blob.begin() + 12, blob.begin() + 12 + mlen);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointError::Code::bad_manifest,
                          std::string("checkpoint manifest unparsable: ") + e.what());
  }

  RawCheckpoint raw;
  try {
    raw.meta.format_version = manifest.at("format_version").get<int>();
    if (raw.meta.format_version != kCheckpointVersion)
      throw CheckpointError(CheckpointError::Code::version_mismatch,
                            "unsupported checkpoint format version " +
                                std::to_string(raw.meta.format_version));
    raw.meta.config = manifest.at("config").get<TrainingConfig>();
    raw.meta.metadata = manifest.value("metadata", nlohmann::json::object());
    for (const auto& je : manifest.at("tensors")) {
      TensorEntry e;
      e.name = je.at("name").get<std::string>();
      e.shape = je.at("shape").get<std::vector<std::size_t>>();
      e.dtype = je.at("dtype").get<std::string>();
      e.offset = je.at("offset").get<std::uint64_t>();
      e.length = je.at("length").get<std::uint64_t>();
      if (e.dtype != "f32")
        throw CheckpointError(CheckpointError::Code::bad_manifest,
                              "unsupported tensor dtype '" + e.dtype + "'");
      raw.meta.tensors.push_back(e);
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointError::Code::bad_manifest,
                          std::string("checkpoint manifest malformed: ") + e.what());
  }
  raw.meta.crc = stored_crc;

  const std::size_t payload_begin = 12 + mlen;
  const std::size_t payload_size = blob.size() - 4 - payload_begin;
  for (const auto& e : raw.meta.tensors) {
    if (e.offset + e.length > payload_size)
      throw CheckpointError(CheckpointError::Code::truncated,
                            "tensor '" + e.name + "' extends past payload end");
    std::size_t expect = sizeof(float);
    for (std::size_t d : e.shape) expect *= d;
    if (expect != e.length)
      throw CheckpointError(CheckpointError::Code::bad_manifest,
                            "tensor '" + e.name + "' length does not match its shape");
  }
  raw.payload.assign(blob.begin() + static_cast<std::ptrdiff_t>(payload_begin),
                     blob.end() - 4);
  return raw;
}

template <typename Real>
void fill_tensor(Tensor<Real>& dst, const TensorEntry& e, const std::vector<char>& payload) {
  if (dst.shape() != e.shape)
    throw CheckpointError(CheckpointError::Code::shape_mismatch,
                          "shape mismatch for tensor '" + e.name + "': checkpoint " +
                              Tensor<Real>::shape_string(e.shape) + " vs model " +
                              Tensor<Real>::shape_string(dst.shape()));
  const float* src = reinterpret_cast<const float*>(payload.data() + e.offset);
  for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] = static_cast<Real>(src[i]);
}

}  // namespace detail

/// Manifest + CRC verification without materializing a model.
inline Checkpoint read_checkpoint_meta(const std::string& path) {
  return detail::read_raw_checkpoint(path).meta;
}

/// Loads serialized tensors into an existing bundle (the bundle's shapes win;
/// a mismatch names the first offending tensor). Teacher copies the student.
template <typename Real>
Checkpoint load_checkpoint_into(EncoderBundle<Real>& bundle, const std::string& path) {
  detail::RawCheckpoint raw = detail::read_raw_checkpoint(path);

  auto expected = detail::exported_tensors(bundle);
  std::size_t cursor = 0;
  for (auto& [name, tensor] : expected) {
    const TensorEntry* entry = nullptr;
    for (std::size_t i = 0; i < raw.meta.tensors.size(); ++i) {
      const std::size_t idx = (cursor + i) % raw.meta.tensors.size();
      if (raw.meta.tensors[idx].name == name) {
        entry = &raw.meta.tensors[idx];
        cursor = idx + 1;
        break;
      }
    }
    if (!entry)
      throw CheckpointError(CheckpointError::Code::missing_tensor,
                            "tensor '" + name + "' missing from checkpoint");
    detail::fill_tensor(*const_cast<Tensor<Real>*>(tensor), *entry, raw.payload);
  }

  bundle.teacher_backbone = bundle.student_backbone;
  bundle.teacher_projector = bundle.student_projector;
  return raw.meta;
}

/// Rebuilds a bundle from the config echoed in the checkpoint.
template <typename Real = float>
std::pair<EncoderBundle<Real>, TrainingConfig> load_checkpoint(const std::string& path) {
  Checkpoint meta = read_checkpoint_meta(path);
  EncoderBundle<Real> bundle = init_encoder<Real>(meta.config.encoder, meta.config.seed);
  load_checkpoint_into(bundle, path);
  return {std::move(bundle), meta.config};
}

}  // namespace gersp
