#pragma once

#include <functional>
#include <string>

#include "kinlab/asymptotics.hpp"
#include "kinlab/config.hpp"

namespace kinlab::runner {

inline constexpr const char* kVersion = "kinlab 0.3";

// Exit codes of the CLI contract.
inline constexpr int kOk = 0;
inline constexpr int kConfigError = 1;
inline constexpr int kNotConverged = 2;
inline constexpr int kUnderResolved = 3;

// Named analytic inflow profile p(phi, psi) on sin(phi) > 0.
std::function<double(double, double)> angular_profile(const config::RunConfig& c);

// Boundary datum g(iota, phi, psi) = c0 + A p(phi,psi) (1 + m cos(k iota + phase)).
asymptotics::BoundaryDatum make_datum(const config::RunConfig& c);

int run_milne(const config::RunConfig& c);
int run_transport(const config::RunConfig& c);
int run_decompose(const config::RunConfig& c);
int run_expand(const config::RunConfig& c);
int run_converge(const config::RunConfig& c);

// Dispatch on c.subcommand; translates ConfigError into kConfigError.
int dispatch(const config::RunConfig& c);

}  // namespace kinlab::runner
