// Copyright 2026 The eihf Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "eihf/cli.hpp"

#include "common.hpp"
#include "eihf/error.hpp"

namespace eihf::cli {

namespace {

void report_error(std::ostream& err, std::string_view kind, std::string_view message) {
  err << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Frequency-band OOD diagnostics: band-wise MMD, high-frequency residual channels, post-hoc scoring",
               "eihf"};
  app.set_version_flag("--version", EIHF_VERSION);
  app.set_config("--config", "", "TOML file mirroring the flags; [subcommand] sections apply to that subcommand");
  app.require_subcommand(1, 1);
  // Subcommands inherit this, so --config may follow the subcommand name.
  app.fallthrough();

  Runner runner;
  add_transform(app, runner);
  add_bandscan(app, runner);
  add_fit_stats(app, runner);
  add_score(app, runner);
  add_eval(app, runner);
  add_diagnose(app, runner);
  add_synth(app, runner);

  // CLI11 parses a reversed vector of arguments.
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << EIHF_VERSION << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage", e.what());
    err << app.help();
    return kExitValidation;
  }

  try {
    if (!runner) {
      report_error(err, "usage", "no subcommand given");
      return kExitValidation;
    }
    runner(Streams{out, err});
    return kExitOk;
  } catch (const Error& e) {
    report_error(err, to_string(e.kind()), e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    report_error(err, "internal", e.what());
    return kExitInternal;
  }
}

}  // namespace eihf::cli
