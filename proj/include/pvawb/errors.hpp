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

#include <stdexcept>
#include <string>

namespace pvawb {

enum class ErrorCode {
  invalid_argument,
  parse_error,
  io_error,
  invalid_spec,          // bad block/builder parameters
  channel_mismatch,      // concat/add/group incompatibilities
  negative_dimension,    // kernel larger than padded input, etc.
  unsupported,           // operation not defined for this layer kind
  non_finite,            // NaN/Inf in activations, weights or loss
  path_explosion,        // receptive-field path count above the cap
  overflow_guard,        // box decoding asked to exponentiate a huge delta
  degenerate_roi,        // roi with non-positive extent after clamping
  convergence_failure,   // svd sweep limit hit
  missing_head,          // classifier rewrite could not find fc6/fc7
  internal,
};

const char* error_code_name(ErrorCode c);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) {
  throw Error(code, msg);
}

inline void check(bool cond, ErrorCode code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::parse_error: return "parse_error";
    case ErrorCode::io_error: return "io_error";
    case ErrorCode::invalid_spec: return "invalid_spec";
    case ErrorCode::channel_mismatch: return "channel_mismatch";
    case ErrorCode::negative_dimension: return "negative_dimension";
    case ErrorCode::unsupported: return "unsupported";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::path_explosion: return "path_explosion";
    case ErrorCode::overflow_guard: return "overflow_guard";
    case ErrorCode::degenerate_roi: return "degenerate_roi";
    case ErrorCode::convergence_failure: return "convergence_failure";
    case ErrorCode::missing_head: return "missing_head";
    case ErrorCode::internal: return "internal";
  }
  return "unknown";
}

}  // namespace pvawb
