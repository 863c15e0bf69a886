#include "ntt/archive.hpp"

#include <fstream>

#include <json.hpp>

#include "ntt/errors.hpp"
#include "ntt/store.hpp"

namespace fs = std::filesystem;

namespace ntt {
namespace {

constexpr int kArchiveVersion = 1;

std::string core_name(std::size_t k) { return "core_" + std::to_string(k); }

}  // namespace

void save_archive(const fs::path& dir, const TensorTrain& tt, const ArchiveInfo& info) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw StoreError("cannot create " + dir.string() + ": " + ec.message());

    nlohmann::json meta;
    meta["format_version"] = kArchiveVersion;
    meta["shape"] = tt.shape();
    meta["ranks"] = tt.ranks();
    meta["method"] = info.method;
    meta["eps"] = info.eps ? nlohmann::json(*info.eps) : nlohmann::json(nullptr);
    meta["stage_eps"] = info.stage_eps;
    meta["seed"] = info.seed;
    meta["probe_seed"] = info.probe_seed;
    meta["probes"] = info.probes;
    nlohmann::json cores = nlohmann::json::array();
    for (std::size_t k = 0; k < tt.cores().size(); ++k) cores.push_back(core_name(k));
    meta["cores"] = cores;

    for (std::size_t k = 0; k < tt.cores().size(); ++k) {
        const DenseTensor& core = tt.cores()[k];
        const fs::path core_dir = dir / core_name(k);
        fs::remove_all(core_dir, ec);
        ChunkedTensorStore::write(core_dir, core, core.shape());
    }
    std::ofstream out(dir / "tt_meta.json", std::ios::binary | std::ios::trunc);
    out << meta.dump(2) << '\n';
    if (!out) throw StoreError("cannot write " + (dir / "tt_meta.json").string());
}

TtArchive load_archive(const fs::path& dir) {
    const fs::path file = dir / "tt_meta.json";
    std::ifstream in(file, std::ios::binary);
    if (!in) throw StoreError("cannot open " + file.string());
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw StoreError(file.string() + ": " + e.what());
    }

    TtArchive out;
    try {
        if (meta.at("format_version").get<int>() != kArchiveVersion)
            throw StoreError(file.string() + ": unsupported format_version");
        const auto shape = meta.at("shape").get<Shape>();
        const auto ranks = meta.at("ranks").get<std::vector<Index>>();
        const auto names = meta.at("cores").get<std::vector<std::string>>();
        if (names.size() != shape.size() || ranks.size() != shape.size() + 1)
            throw StoreError(file.string() + ": shape, ranks and cores disagree");

        std::vector<DenseTensor> cores;
        for (std::size_t k = 0; k < names.size(); ++k) {
            DenseTensor core = ChunkedTensorStore::open(dir / names[k]).read_all();
            const Shape expected{ranks[k], shape[k], ranks[k + 1]};
            if (core.shape() != expected)
                throw StoreError((dir / names[k]).string() + ": core shape does not match tt_meta ranks");
            cores.push_back(std::move(core));
        }
        out.train = TensorTrain(std::move(cores));

        out.info.method = meta.at("method").get<std::string>();
        if (!meta.at("eps").is_null()) out.info.eps = meta.at("eps").get<double>();
        out.info.stage_eps = meta.value("stage_eps", std::vector<double>{});
        out.info.seed = meta.at("seed").get<std::uint64_t>();
        out.info.probe_seed = meta.at("probe_seed").get<std::uint64_t>();
        out.info.probes = meta.value("probes", Index{0});
    } catch (const nlohmann::json::exception& e) {
        throw StoreError(file.string() + ": " + e.what());
    } catch (const DimensionError& e) {
        throw StoreError(file.string() + ": " + e.message());
    } catch (const RankError& e) {
        throw StoreError(file.string() + ": " + e.message());
    }
    return out;
}

}  // namespace ntt
