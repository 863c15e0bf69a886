#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ntt/tensor.hpp"

namespace ntt::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitDimension = 3;
inline constexpr int kExitNumerical = 4;

/// Runs one `ntt` subcommand. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Splits p into a d-mode grid by dealing its prime factors round-robin over
/// the modes they divide. Throws DimensionError when no such split exists.
std::vector<int> default_grid(int p, const Shape& shape);

/// "2x2x1x1" or a bare rank count (factored with default_grid).
std::vector<int> parse_grid(const std::string& text, const Shape& shape);

/// One value (all inner ranks), d - 1 inner ranks, or the full d + 1 vector.
std::vector<Index> expand_ranks(const std::vector<Index>& given, std::size_t d);

}  // namespace ntt::cli
