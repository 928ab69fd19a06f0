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

#pragma once

#include <string>

#include "pvawb/engine.hpp"

namespace pvawb {

// On-disk layout: an 8-byte little-endian header length, a JSON header
// ({"format","version","tensors":{name:{"offset","shape"}},"meta"}, offsets
// counted in doubles), then the concatenated float64 payload. Little-endian
// hosts only.
void save_weights(const WeightStore& ws, const std::string& path);
WeightStore load_weights(const std::string& path);

}  // namespace pvawb
