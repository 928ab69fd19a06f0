// Copyright 2026 The pvawb Authors
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

#include "pvawb/weight_io.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

namespace pvawb {

static_assert(std::endian::native == std::endian::little,
              "weight files are little-endian; big-endian hosts unsupported");

using nlohmann::json;

void save_weights(const WeightStore& ws, const std::string& path) {
  json tensors = json::object();
  uint64_t offset = 0;  // in doubles
  for (const auto& [name, e] : ws.entries) {
    tensors[name] = {{"offset", offset}, {"shape", e.shape}};
    offset += e.data.size();
  }
  json header{{"format", "pvawb-weights"},
              {"version", 1},
              {"tensors", std::move(tensors)}};
  if (!ws.meta.is_null()) header["meta"] = ws.meta;
  const std::string htext = header.dump();

  std::ofstream f(path, std::ios::binary);
  check(f.good(), ErrorCode::io_error, "cannot write '" + path + "'");
  const uint64_t hlen = htext.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (const auto& [name, e] : ws.entries)
    f.write(reinterpret_cast<const char*>(e.data.data()),
            static_cast<std::streamsize>(e.data.size() * sizeof(double)));
  check(f.good(), ErrorCode::io_error, "short write to '" + path + "'");
}

WeightStore load_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), ErrorCode::io_error, "cannot open '" + path + "'");
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  check(f.good() && hlen > 0 && hlen < (1ULL << 31), ErrorCode::parse_error,
        "'" + path + "' is not a weight file");
  std::string htext(hlen, '\0');
  f.read(htext.data(), static_cast<std::streamsize>(hlen));
  check(f.good(), ErrorCode::parse_error, "truncated header in '" + path + "'");
  json header = json::parse(htext, nullptr, false);
  check(!header.is_discarded() &&
            header.value("format", std::string{}) == "pvawb-weights" &&
            header.value("version", 0) == 1,
        ErrorCode::parse_error, "unrecognised weight file header");

  f.seekg(0, std::ios::end);
  const auto end = f.tellg();
  f.seekg(static_cast<std::streamoff>(sizeof(hlen) + hlen));
  const uint64_t payload_bytes =
      static_cast<uint64_t>(end) - sizeof(hlen) - hlen;
  check(payload_bytes % sizeof(double) == 0, ErrorCode::parse_error,
        "payload of '" + path + "' is not a whole number of doubles");
  std::vector<double> payload(payload_bytes / sizeof(double), 0.0);
  f.read(reinterpret_cast<char*>(payload.data()),
         static_cast<std::streamsize>(payload_bytes));
  check(f.good(), ErrorCode::parse_error, "truncated payload in '" + path + "'");

  WeightStore ws;
  if (header.contains("meta")) ws.meta = header.at("meta");
  for (const auto& [name, jt] : header.at("tensors").items()) {
    WeightStore::Entry e;
    e.shape = jt.at("shape").get<std::vector<int>>();
    const uint64_t offset = jt.at("offset").get<uint64_t>();
    const long long cnt = e.count();
    check(cnt >= 0 && offset + cnt <= payload.size(), ErrorCode::parse_error,
          "tensor '" + name + "' escapes the payload");
    e.data.assign(payload.begin() + static_cast<ptrdiff_t>(offset),
                  payload.begin() + static_cast<ptrdiff_t>(offset + cnt));
    ws.entries[name] = std::move(e);
  }
  return ws;
}

}  // namespace pvawb
