#pragma once

#include "ensemble/synthetic.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace ensemble::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int { ok = 0, failure = 1, config_error = 2, data_error = 3 };

/// Runs the command line `args` (without the program name). Normal output
/// goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Synthetic spec from JSON: an optional "preset" name overlaid with any of
/// the SyntheticSpec fields. Unknown keys are rejected.
SyntheticSpec spec_from_json(const nlohmann::json& j);
nlohmann::json spec_to_json(const SyntheticSpec& s);

/// N values for the theory table: the requested grid (or powers of two when
/// empty) plus 1, round(sqrt(n)) and n, sorted and deduplicated.
std::vector<std::size_t> theory_grid(std::size_t n_samples, const std::vector<std::size_t>& requested);

}  // namespace ensemble::cli
