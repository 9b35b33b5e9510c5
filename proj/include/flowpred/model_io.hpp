// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>

#include "flowpred/dpgp.hpp"

namespace flowpred {

/// JSON document with every pattern's samples and hyperparameters, the
/// priors, alpha and training provenance. GPs are refit on load.
void write_mixture(std::ostream& out, const MixtureModel& mixture);
MixtureModel read_mixture(std::istream& in, const std::string& source = "<stream>");
void save_mixture(const std::filesystem::path& path, const MixtureModel& mixture);
MixtureModel load_mixture(const std::filesystem::path& path);

/// 64-bit FNV-1a over the CSV serialization, as 16 hex digits.
std::string corpus_hash(std::span<const Trajectory> trajectories);
std::string fnv1a_hex(const std::string& bytes);

}  // namespace flowpred
