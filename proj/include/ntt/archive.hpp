#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ntt/tensor.hpp"

namespace ntt {

struct ArchiveInfo {
    std::string method;
    std::optional<double> eps;  ///< absent when ranks were fixed
    std::uint64_t seed = 0;
    std::uint64_t probe_seed = 0;
    Index probes = 0;  ///< 0 when the error was computed exactly
    std::vector<double> stage_eps;
};

struct TtArchive {
    TensorTrain train;
    ArchiveInfo info;
};

/// Writes `tt_meta.json` and one single-chunk store `core_<k>` per core.
/// The output depends only on its arguments.
void save_archive(const std::filesystem::path& dir, const TensorTrain& tt, const ArchiveInfo& info);

/// Throws StoreError on a missing or inconsistent archive.
TtArchive load_archive(const std::filesystem::path& dir);

}  // namespace ntt
