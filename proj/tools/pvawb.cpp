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

// Command-line front end. Talks to the library exclusively through the C
// API in pvawb.h; everything here is argument plumbing and file I/O.
//
// Exit codes: 0 success, 1 a check reported problems (verify mismatch,
// validation diagnostics), 2 usage or bad input, 3 internal failure.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "pvawb.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitBadInput = 2;
constexpr int kExitInternal = 3;

struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { pvawb_string_free(p); }
  std::string str() const { return p == nullptr ? std::string() : p; }
};

struct GraphHandle {
  pvawb_graph* g = nullptr;
  ~GraphHandle() { pvawb_graph_free(g); }
};

[[noreturn]] void die(int status) {
  std::cerr << "error: " << pvawb_last_error() << "\n";
  std::exit(status == PVAWB_E_INTERNAL ? kExitInternal : kExitBadInput);
}

void require_ok(int status) {
  if (status != PVAWB_OK) die(status);
}

bool parse_shape(const std::string& text, int& h, int& w, int& c) {
  char extra = 0;
  return std::sscanf(text.c_str(), "%dx%dx%d%c", &h, &w, &c, &extra) == 3 &&
         h > 0 && w > 0 && c > 0;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "error: cannot read '" << path << "'\n";
    std::exit(kExitBadInput);
  }
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << "\n";
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    std::cerr << "error: cannot write '" << path << "'\n";
    std::exit(kExitBadInput);
  }
  out << text;
}

// Shared --graph/--name resolution: a file wins over a bundled name.
struct GraphArgs {
  std::string file;
  std::string name;

  void hook(CLI::App* cmd, bool required) {
    auto* f = cmd->add_option("--graph", file, "graph definition JSON file");
    auto* n = cmd->add_option("--name", name, "bundled graph name");
    f->excludes(n);
    if (required) {
      cmd->callback([this, cmd] {
        if (file.empty() && name.empty())
          throw CLI::RequiredError(cmd->get_name() +
                                   " needs --graph or --name");
      });
    }
  }

  pvawb_graph* load() const {
    pvawb_graph* g = nullptr;
    if (!file.empty())
      require_ok(pvawb_graph_from_file(file.c_str(), &g));
    else
      require_ok(pvawb_graph_builtin(name.c_str(), &g));
    return g;
  }
};

int resolve_input(pvawb_graph* g, const std::string& spec, int& h, int& w,
                  int& c) {
  if (!spec.empty()) {
    if (!parse_shape(spec, h, w, c)) {
      std::cerr << "error: --input expects HxWxC with positive dims\n";
      return kExitBadInput;
    }
    return kExitOk;
  }
  require_ok(pvawb_graph_input_shape(g, &h, &w, &c));
  if (h <= 0 || w <= 0 || c <= 0) {
    std::cerr << "error: the graph records no input size; pass --input\n";
    return kExitBadInput;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"model graph toolbox: cost tables, receptive fields, "
               "proposal post-processing, low-rank rewrites"};
  app.require_subcommand(1);
  app.set_version_flag("--version", pvawb_version());
  app.failure_message(CLI::FailureMessage::help);

  // ---- build ----
  auto* build = app.add_subcommand("build", "emit a bundled graph as JSON");
  std::string build_name = "pvanet";
  std::string build_out;
  build->add_option("--name", build_name, "bundled graph name")
      ->capture_default_str();
  build->add_option("-o,--output", build_out, "write to file (default stdout)");

  // ---- names ----
  auto* names = app.add_subcommand("names", "list bundled graph names");

  // ---- validate ----
  auto* validate = app.add_subcommand("validate", "check a graph definition");
  GraphArgs validate_graph;
  validate_graph.hook(validate, true);
  bool validate_json = false;
  validate->add_flag("--json", validate_json, "emit diagnostics as JSON");

  // ---- shapes ----
  auto* shapes = app.add_subcommand("shapes", "print every node's output size");
  GraphArgs shapes_graph;
  shapes_graph.hook(shapes, true);
  std::string shapes_input;
  shapes->add_option("--input", shapes_input, "input size as HxWxC");

  // ---- cost ----
  auto* cost = app.add_subcommand("cost", "per-block parameter/MAC table");
  GraphArgs cost_graph;
  cost_graph.hook(cost, true);
  std::string cost_input;
  cost->add_option("--input", cost_input, "input size as HxWxC");
  std::string cost_rounding = "table";
  cost->add_option("--rounding", cost_rounding,
                   "table (published convention) or exact")
      ->check(CLI::IsMember({"table", "exact"}))
      ->capture_default_str();
  bool cost_json = false;
  cost->add_flag("--json", cost_json, "emit JSON instead of the text table");

  // ---- gmac ----
  auto* gmac = app.add_subcommand(
      "gmac", "detection-time GMAC split for the bundled detector");
  bool gmac_compressed = false;
  gmac->add_flag("--compressed", gmac_compressed,
                 "use the low-rank classifier head");
  int gmac_proposals = 200;
  gmac->add_option("--proposals", gmac_proposals, "regions per image")
      ->capture_default_str();
  bool gmac_json = false;
  gmac->add_flag("--json", gmac_json, "emit JSON");

  // ---- verify ----
  auto* verify = app.add_subcommand(
      "verify", "diff the bundled detector against the reference cost table");
  std::string verify_fixture;
  verify->add_option("--fixture", verify_fixture,
                     "fixture JSON file (default: embedded copy)");
  bool verify_quiet = false;
  verify->add_flag("-q,--quiet", verify_quiet, "print only the summary line");

  // ---- rf ----
  auto* rf = app.add_subcommand("rf", "receptive-field distribution of a node");
  GraphArgs rf_graph;
  rf_graph.hook(rf, true);
  std::string rf_node;
  rf->add_option("--node", rf_node, "node to analyse")->required();
  uint64_t rf_max_paths = 0;
  rf->add_option("--max-paths", rf_max_paths,
                 "abort above this many paths (0 = default 1e6)");
  bool rf_json = false;
  rf->add_flag("--json", rf_json, "emit JSON");

  // ---- train-toy ----
  auto* train = app.add_subcommand(
      "train-toy", "train a small bundled classifier on synthetic data");
  std::string train_net = "mcrelu";
  train->add_option("--net", train_net, "plain, crelu or mcrelu")
      ->check(CLI::IsMember({"plain", "crelu", "mcrelu"}))
      ->capture_default_str();
  uint64_t train_seed = 1;
  train->add_option("--seed", train_seed)->capture_default_str();
  int train_iters = 400;
  train->add_option("--iterations", train_iters)->capture_default_str();
  int train_batch = 16;
  train->add_option("--batch", train_batch)->capture_default_str();
  int train_patience = 100;
  train->add_option("--patience", train_patience)->capture_default_str();
  int train_window = 50;
  train->add_option("--window", train_window)->capture_default_str();
  std::string train_csv;
  train->add_option("--csv", train_csv, "write per-iteration history here");

  // ---- detect-sim ----
  auto* detect = app.add_subcommand(
      "detect-sim", "run the proposal pipeline on a synthetic scene");
  std::string detect_scene;
  detect->add_option("--scene", detect_scene, "scene description JSON file")
      ->required();
  uint64_t detect_seed = 0;
  detect->add_option("--seed", detect_seed)->capture_default_str();
  int detect_pre = -1;
  detect->add_option("--pre-nms", detect_pre, "boxes kept before NMS");
  double detect_iou = std::nan("");
  detect->add_option("--nms-iou", detect_iou, "NMS overlap threshold");
  int detect_post = -1;
  detect->add_option("--post-nms", detect_post, "boxes kept after NMS");
  bool detect_vote = false;
  detect->add_flag("--vote", detect_vote, "apply box voting to the kept set");
  std::string detect_out;
  detect->add_option("-o,--output", detect_out,
                     "write JSON lines here (default stdout)");

  // ---- compress ----
  auto* compress = app.add_subcommand(
      "compress", "low-rank rewrite report for the classifier head");
  int compress_rank = 512;
  compress->add_option("--rank", compress_rank)->capture_default_str();
  int compress_proposals = 200;
  compress->add_option("--proposals", compress_proposals)
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help or the failure message
    return code == 0 ? kExitOk : kExitBadInput;
  }

  if (build->parsed()) {
    GraphHandle g;
    require_ok(pvawb_graph_builtin(build_name.c_str(), &g.g));
    OwnedString text;
    require_ok(pvawb_graph_to_json(g.g, &text.p));
    write_output(build_out, text.str());
    return kExitOk;
  }

  if (names->parsed()) {
    OwnedString arr;
    require_ok(pvawb_builtin_names(&arr.p));
    for (const auto& n : nlohmann::json::parse(arr.str()))
      std::cout << n.get<std::string>() << "\n";
    return kExitOk;
  }

  if (validate->parsed()) {
    GraphHandle g{validate_graph.load()};
    OwnedString diags;
    int problems = 0;
    require_ok(pvawb_graph_validate(g.g, &diags.p, &problems));
    if (validate_json) {
      std::cout << diags.str() << "\n";
    } else if (problems == 0) {
      std::cout << "ok\n";
    } else {
      for (const auto& d : nlohmann::json::parse(diags.str()))
        std::cout << d.value("kind", "?") << " at '" << d.value("node", "?")
                  << "': " << d.value("message", "") << "\n";
    }
    return problems == 0 ? kExitOk : kExitCheckFailed;
  }

  if (shapes->parsed()) {
    GraphHandle g{shapes_graph.load()};
    int h = 0, w = 0, c = 0;
    if (int rc = resolve_input(g.g, shapes_input, h, w, c); rc != kExitOk)
      return rc;
    OwnedString out;
    require_ok(pvawb_infer_shapes(g.g, h, w, c, &out.p));
    std::cout << out.str() << "\n";
    return kExitOk;
  }

  if (cost->parsed()) {
    GraphHandle g{cost_graph.load()};
    int h = 0, w = 0, c = 0;
    if (int rc = resolve_input(g.g, cost_input, h, w, c); rc != kExitOk)
      return rc;
    OwnedString out;
    require_ok(pvawb_cost_report(g.g, h, w, c, cost_rounding == "table",
                                 cost_json, &out.p));
    write_output("", out.str());
    return kExitOk;
  }

  if (gmac->parsed()) {
    OwnedString out;
    require_ok(pvawb_detection_gmac(gmac_compressed, gmac_proposals, gmac_json,
                                    &out.p));
    write_output("", out.str());
    return kExitOk;
  }

  if (verify->parsed()) {
    std::string fixture;
    if (!verify_fixture.empty()) fixture = read_file(verify_fixture);
    OwnedString report;
    int mismatches = 0;
    require_ok(pvawb_verify_table(
        verify_fixture.empty() ? nullptr : fixture.c_str(), &report.p,
        &mismatches));
    if (verify_quiet) {
      std::istringstream lines(report.str());
      std::string line, last;
      while (std::getline(lines, line))
        if (!line.empty()) last = line;
      std::cout << last << "\n";
    } else {
      write_output("", report.str());
    }
    return mismatches == 0 ? kExitOk : kExitCheckFailed;
  }

  if (rf->parsed()) {
    GraphHandle g{rf_graph.load()};
    OwnedString out;
    require_ok(pvawb_rf_distribution(g.g, rf_node.c_str(), rf_max_paths,
                                     rf_json, &out.p));
    write_output("", out.str());
    return kExitOk;
  }

  if (train->parsed()) {
    nlohmann::json cfg{{"net", train_net},       {"seed", train_seed},
                       {"iterations", train_iters}, {"batch", train_batch},
                       {"patience", train_patience}, {"window", train_window}};
    OwnedString csv, summary;
    require_ok(pvawb_train_toy(cfg.dump().c_str(), &csv.p, &summary.p));
    if (!train_csv.empty()) write_output(train_csv, csv.str());
    std::cout << summary.str() << "\n";
    return kExitOk;
  }

  if (detect->parsed()) {
    const std::string scene = read_file(detect_scene);
    OwnedString out;
    require_ok(pvawb_detect_sim(scene.c_str(), detect_seed, detect_pre,
                                detect_iou, detect_post, detect_vote, &out.p));
    write_output(detect_out, out.str());
    return kExitOk;
  }

  if (compress->parsed()) {
    OwnedString out;
    require_ok(pvawb_compress_report(compress_rank, compress_proposals,
                                     &out.p));
    std::cout << out.str() << "\n";
    return kExitOk;
  }

  return kExitOk;
}
