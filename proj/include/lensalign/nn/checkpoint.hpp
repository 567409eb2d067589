// Copyright (c) 2026 The lensalign authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <json.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "lensalign/nn/tensor.hpp"

namespace lensalign::nn {

// Checkpoint file layout (little-endian):
//   4 bytes  magic "ALGN"
//   8 bytes  u64 header length H
//   H bytes  UTF-8 JSON header: schema_version, kind, iteration, config,
//            tensors: [{name, shape, count} ...]
//   blobs    f32 data for each tensor, in header order
//   8 bytes  u64 FNV-1a of the blob section

inline constexpr char kCheckpointMagic[4] = {'A', 'L', 'G', 'N'};

struct LoadedCheckpoint {
  nlohmann::json header;
  std::unordered_map<std::string, std::vector<float>> blobs;
};

template <class S>
void save_checkpoint(const std::filesystem::path& path,
                     nlohmann::json header,
                     const std::vector<NamedTensor<S>>& tensors) {
  nlohmann::json tlist = nlohmann::json::array();
  std::string blob_bytes;
  for (const auto& t : tensors) {
    tlist.push_back({{"name", t.name},
                     {"shape", t.shape},
                     {"count", t.data->size()}});
    for (S v : *t.data) {
      const float f = static_cast<float>(v);
      char b[4];
      std::memcpy(b, &f, 4);
      blob_bytes.append(b, 4);
    }
  }
  header["tensors"] = std::move(tlist);
  if (!header.contains("schema_version")) header["schema_version"] = 1;
  const std::string hs = header.dump();

  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open checkpoint for writing: " + path.string());
  out.write(kCheckpointMagic, 4);
  const std::uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  out.write(blob_bytes.data(), static_cast<std::streamsize>(blob_bytes.size()));
  Hasher h;
  h.update(blob_bytes.data(), blob_bytes.size());
  const std::uint64_t digest = h.value();
  out.write(reinterpret_cast<const char*>(&digest), 8);
  if (!out) throw Error("checkpoint write failed: " + path.string());
}

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw MissingFileError("checkpoint not found: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw SchemaError("not a checkpoint file: " + path.string());
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 8);
  if (!in || hlen == 0 || hlen > (64u << 20))
    throw SchemaError("corrupt checkpoint header length: " + path.string());
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw SchemaError("truncated checkpoint header: " + path.string());

  LoadedCheckpoint ck;
  try {
    ck.header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("checkpoint header is not valid JSON: " +
                      std::string(e.what()));
  }
  if (!ck.header.contains("tensors") || !ck.header["tensors"].is_array())
    throw SchemaError("checkpoint header lacks tensor table");

  std::string blob_bytes;
  for (const auto& t : ck.header["tensors"]) {
    const std::string name = t.at("name").get<std::string>();
    const std::size_t count = t.at("count").get<std::size_t>();
    std::vector<float> data(count);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(count * 4));
    if (!in) throw SchemaError("truncated checkpoint blob: " + name);
    blob_bytes.append(reinterpret_cast<const char*>(data.data()), count * 4);
    ck.blobs.emplace(name, std::move(data));
  }
  std::uint64_t stored = 0;
  in.read(reinterpret_cast<char*>(&stored), 8);
  if (!in) throw SchemaError("checkpoint missing trailing digest");
  Hasher h;
  h.update(blob_bytes.data(), blob_bytes.size());
  if (h.value() != stored)
    throw ChecksumError("checkpoint blob digest mismatch: " + path.string());
  return ck;
}

/// Copy loaded blobs into a model's tensors, matching by name and size.
template <class S>
void restore_tensors(const LoadedCheckpoint& ck,
                     const std::vector<NamedTensor<S>>& tensors) {
  for (const auto& t : tensors) {
    auto it = ck.blobs.find(t.name);
    if (it == ck.blobs.end())
      throw SchemaError("checkpoint lacks tensor: " + t.name);
    if (it->second.size() != t.data->size())
      throw SchemaError("checkpoint tensor size mismatch: " + t.name);
    for (std::size_t i = 0; i < t.data->size(); ++i)
      (*t.data)[i] = static_cast<S>(it->second[i]);
  }
}

}  // namespace lensalign::nn
