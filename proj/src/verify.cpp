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

#include "pvawb/verify.hpp"

#include <sstream>

#include "pvawb/builders.hpp"
#include "pvawb/json_io.hpp"

#include "structure_table_embed.inc"

namespace pvawb {

using nlohmann::json;

TableFixture fixture_from_json(const json& j) {
  check(j.is_object() && j.contains("rows") && j.contains("totals"),
        ErrorCode::parse_error, "fixture needs 'rows' and 'totals'");
  TableFixture f;
  f.input = shape_from_text(j.value("input", std::string("1056x640x3")));
  for (const auto& jr : j.at("rows")) {
    TableFixture::Row r;
    r.name = jr.at("name").get<std::string>();
    r.output = jr.at("output").get<std::string>();
    r.params = jr.value("params", std::string{});
    r.mac = jr.value("mac", std::string{});
    f.rows.push_back(std::move(r));
  }
  f.total_params = j.at("totals").at("params").get<std::string>();
  f.total_mac = j.at("totals").at("mac").get<std::string>();
  if (j.contains("gmac")) {
    const auto& g = j.at("gmac");
    f.gmac_proposals = g.value("proposals", 200);
    auto fill = [](const json& side, std::array<std::string, 4>& out) {
      out = {side.at("shared").get<std::string>(),
             side.at("rpn").get<std::string>(),
             side.at("classifier").get<std::string>(),
             side.at("total").get<std::string>()};
    };
    fill(g.at("standard"), f.gmac_standard);
    fill(g.at("compressed"), f.gmac_compressed);
  }
  return f;
}

const TableFixture& default_fixture() {
  static const TableFixture f =
      fixture_from_json(json::parse(detail::embedded_structure_table));
  return f;
}

namespace {

std::string shape_text(const TensorShape& s) {
  std::ostringstream os;
  os << s.h << "x" << s.w << "x" << s.c;
  return os.str();
}

}  // namespace

VerifyResult verify_structure_table(const TableFixture& fixture) {
  VerifyResult res;
  std::ostringstream os;
  auto compare = [&](const std::string& what, const std::string& expect,
                     const std::string& got) {
    ++res.checked;
    bool ok = expect == got;
    if (!ok) ++res.mismatches;
    os << (ok ? "  ok    " : "  FAIL  ") << what << ": expected '" << expect
       << "', computed '" << got << "'\n";
  };

  NetworkGraph net = build_pvanet_feature_extractor();
  auto rows = block_rows(net, fixture.input);

  os << "block table (" << shape_text(fixture.input) << " input)\n";
  if (rows.size() != fixture.rows.size()) {
    ++res.checked;
    ++res.mismatches;
    os << "  FAIL  row count: expected " << fixture.rows.size()
       << ", computed " << rows.size() << "\n";
  }
  size_t n = std::min(rows.size(), fixture.rows.size());
  long long tenth_k = 0, m = 0;
  for (const auto& row : rows) {
    if (row.params == 0 && row.macs == 0) continue;
    tenth_k += params_tenth_k(row.params);
    m += mac_m(row.macs);
  }
  for (size_t i = 0; i < n; ++i) {
    const auto& want = fixture.rows[i];
    const auto& got = rows[i];
    compare("row " + want.name + " name", want.name, got.name);
    compare("row " + want.name + " output", want.output,
            shape_text(got.output));
    bool free_row = got.params == 0 && got.macs == 0;
    compare("row " + want.name + " params", want.params,
            free_row ? "" : params_text(got.params));
    compare("row " + want.name + " mac", want.mac,
            free_row ? "" : mac_text(got.macs));
  }
  compare("total params", fixture.total_params, params_text(tenth_k * 100));
  compare("total mac", fixture.total_mac, std::to_string(m) + "M");

  os << "detection GMAC split (" << fixture.gmac_proposals << " proposals)\n";
  CostReport feat = graph_cost(net, fixture.input);
  for (bool compressed : {false, true}) {
    GmacBreakdown b =
        detection_cost(feat, build_rpn_head(),
                       build_classifier_head(compressed),
                       fixture.gmac_proposals);
    const auto& want = compressed ? fixture.gmac_compressed
                                  : fixture.gmac_standard;
    const char* tag = compressed ? " (compressed)" : "";
    compare(std::string("gmac shared") + tag, want[0],
            gmac_text(b.shared_tenths()));
    compare(std::string("gmac rpn") + tag, want[1],
            gmac_text(b.rpn_tenths()));
    compare(std::string("gmac classifier") + tag, want[2],
            gmac_text(b.classifier_tenths()));
    compare(std::string("gmac total") + tag, want[3],
            gmac_text(b.total_tenths()));
  }

  os << (res.mismatches == 0 ? "verified: " : "MISMATCHED: ") << res.checked
     << " cells checked, " << res.mismatches << " mismatches\n";
  res.report = os.str();
  return res;
}

}  // namespace pvawb
