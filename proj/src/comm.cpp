#include "ntt/comm.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include <unistd.h>

#include "ntt/errors.hpp"

namespace ntt {

// ---------------------------------------------------------------------------
// TimingReport

double TimingReport::compute_seconds() const noexcept {
    return seconds(TimingCategory::GR) + seconds(TimingCategory::MM) + seconds(TimingCategory::MAD) +
           seconds(TimingCategory::Norm) + seconds(TimingCategory::INIT);
}

double TimingReport::communication_seconds() const noexcept {
    return seconds(TimingCategory::AG) + seconds(TimingCategory::AR) + seconds(TimingCategory::RSC);
}

TimingReport& TimingReport::operator+=(const TimingReport& other) noexcept {
    for (std::size_t k = 0; k < kTimingCategories; ++k) seconds_[k] += other.seconds_[k];
    return *this;
}

TimingReport& TimingReport::operator/=(double divisor) noexcept {
    for (auto& s : seconds_) s /= divisor;
    return *this;
}

std::string_view TimingReport::name(TimingCategory c) noexcept {
    switch (c) {
    case TimingCategory::GR: return "GR";
    case TimingCategory::MM: return "MM";
    case TimingCategory::MAD: return "MAD";
    case TimingCategory::Norm: return "Norm";
    case TimingCategory::INIT: return "INIT";
    case TimingCategory::AG: return "AG";
    case TimingCategory::AR: return "AR";
    case TimingCategory::RSC: return "RSC";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Collectives on top of exchange()

namespace {

void require_uniform_shapes(std::span<const Communicator::Contribution> parts, std::string_view op) {
    for (const auto& c : parts)
        if (c.rows != parts[0].rows || c.cols != parts[0].cols)
            throw CollectiveContractError(std::string(op) + ": ranks supplied blocks of shape " +
                                          std::to_string(parts[0].rows) + "x" + std::to_string(parts[0].cols) +
                                          " and " + std::to_string(c.rows) + "x" + std::to_string(c.cols));
}

Communicator::Contribution contribution_of(const Matrix& m) {
    return {m.rows(), m.cols(), std::span<const double>(m.data(), static_cast<std::size_t>(m.size()))};
}

}  // namespace

std::vector<Matrix> Communicator::all_gather(const Matrix& local) {
    ScopedTimer timer(timers(), TimingCategory::AG);
    std::vector<Matrix> out;
    exchange(contribution_of(local), [&](std::span<const Contribution> parts) {
        require_uniform_shapes(parts, "all_gather");
        out.reserve(parts.size());
        for (const auto& c : parts) out.emplace_back(Eigen::Map<const Matrix>(c.data.data(), c.rows, c.cols));
    });
    return out;
}

Matrix Communicator::all_gather_concat(const Matrix& local, Axis axis) {
    ScopedTimer timer(timers(), TimingCategory::AG);
    Matrix out;
    exchange(contribution_of(local), [&](std::span<const Contribution> parts) {
        // Blocks may differ in length along the concatenation axis only.
        Index total = 0;
        for (const auto& c : parts) {
            const bool fits = axis == Axis::Rows ? c.cols == parts[0].cols : c.rows == parts[0].rows;
            if (!fits)
                throw CollectiveContractError("all_gather: ranks supplied blocks of shape " +
                                              std::to_string(parts[0].rows) + "x" + std::to_string(parts[0].cols) +
                                              " and " + std::to_string(c.rows) + "x" + std::to_string(c.cols));
            total += axis == Axis::Rows ? c.rows : c.cols;
        }
        if (axis == Axis::Rows)
            out.resize(total, parts[0].cols);
        else
            out.resize(parts[0].rows, total);
        Index at = 0;
        for (const auto& c : parts) {
            const Eigen::Map<const Matrix> block(c.data.data(), c.rows, c.cols);
            if (axis == Axis::Rows) {
                out.middleRows(at, c.rows) = block;
                at += c.rows;
            } else {
                out.middleCols(at, c.cols) = block;
                at += c.cols;
            }
        }
    });
    return out;
}

Matrix Communicator::all_reduce_sum(const Matrix& local) {
    ScopedTimer timer(timers(), TimingCategory::AR);
    Matrix out;
    exchange(contribution_of(local), [&](std::span<const Contribution> parts) {
        require_uniform_shapes(parts, "all_reduce");
        out = Matrix::Zero(parts[0].rows, parts[0].cols);
        for (const auto& c : parts) out += Eigen::Map<const Matrix>(c.data.data(), c.rows, c.cols);
    });
    return out;
}

double Communicator::all_reduce_sum(double local) {
    Matrix m(1, 1);
    m(0, 0) = local;
    return all_reduce_sum(m)(0, 0);
}

std::vector<double> Communicator::all_reduce_sum(std::span<const double> local) {
    Matrix m = Eigen::Map<const Matrix>(local.data(), 1, static_cast<Index>(local.size()));
    Matrix s = all_reduce_sum(m);
    return std::vector<double>(s.data(), s.data() + s.size());
}

Matrix Communicator::reduce_scatter_sum(const Matrix& local, Axis axis) {
    const Index groups = size();
    const Index extent = axis == Axis::Rows ? local.rows() : local.cols();
    if (extent % groups != 0)
        throw DimensionError("reduce_scatter: extent " + std::to_string(extent) +
                             " is not divisible by group size " + std::to_string(groups));
    return reduce_scatter_sum(local, axis, std::vector<Index>(static_cast<std::size_t>(groups), extent / groups));
}

Matrix Communicator::reduce_scatter_sum(const Matrix& local, Axis axis, std::span<const Index> counts) {
    ScopedTimer timer(timers(), TimingCategory::RSC);
    const Index extent = axis == Axis::Rows ? local.rows() : local.cols();
    if (static_cast<int>(counts.size()) != size())
        throw DimensionError("reduce_scatter: " + std::to_string(counts.size()) + " counts for a group of " +
                             std::to_string(size()));
    Index begin = 0, total = 0;
    for (int k = 0; k < size(); ++k) {
        if (counts[k] < 0) throw DimensionError("reduce_scatter: negative count");
        if (k < rank()) begin += counts[k];
        total += counts[k];
    }
    if (total != extent)
        throw DimensionError("reduce_scatter: counts sum to " + std::to_string(total) + " but the extent is " +
                             std::to_string(extent));
    const Index slice = counts[rank()];
    Matrix out;
    exchange(contribution_of(local), [&](std::span<const Contribution> parts) {
        require_uniform_shapes(parts, "reduce_scatter");
        if (axis == Axis::Rows) {
            out = Matrix::Zero(slice, local.cols());
            for (const auto& c : parts)
                out += Eigen::Map<const Matrix>(c.data.data(), c.rows, c.cols).middleRows(begin, slice);
        } else {
            out = Matrix::Zero(local.rows(), slice);
            for (const auto& c : parts)
                out += Eigen::Map<const Matrix>(c.data.data(), c.rows, c.cols).middleCols(begin, slice);
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// In-process backend

namespace {

struct GroupState;

struct WorldState {
    std::string session;
    std::atomic<bool> aborted{false};
    std::mutex registry_mutex;
    std::vector<std::weak_ptr<GroupState>> groups;

    void enroll(const std::shared_ptr<GroupState>& g) {
        std::lock_guard lock(registry_mutex);
        groups.push_back(g);
    }
    void abort();
};

struct GroupState {
    GroupState(int n, std::shared_ptr<WorldState> w) : size(n), world(std::move(w)), slots(n, nullptr) {}

    const int size;
    std::shared_ptr<WorldState> world;

    std::mutex mutex;
    std::condition_variable cv;
    int arrived = 0;
    std::uint64_t generation = 0;
    std::vector<const Communicator::Contribution*> slots;

    struct Pending {
        std::shared_ptr<GroupState> group;
        int remaining;
    };
    std::map<std::pair<std::uint64_t, int>, Pending> children;

    void arrive_and_wait() {
        std::unique_lock lock(mutex);
        if (world->aborted) throw SpmdAborted();
        const auto gen = generation;
        if (++arrived == size) {
            arrived = 0;
            ++generation;
            cv.notify_all();
            return;
        }
        cv.wait(lock, [&] { return generation != gen || world->aborted.load(); });
        if (generation == gen) throw SpmdAborted();
    }
};

void WorldState::abort() {
    aborted = true;
    std::lock_guard lock(registry_mutex);
    for (auto& weak : groups) {
        if (auto g = weak.lock()) {
            std::lock_guard glock(g->mutex);
            g->cv.notify_all();
        }
    }
}

std::string new_session_id() {
    static std::atomic<std::uint64_t> counter{0};
    return std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1));
}

class InProcessCommunicator final : public Communicator {
public:
    InProcessCommunicator(std::shared_ptr<GroupState> group, int rank,
                          std::shared_ptr<TimingReport> timers = nullptr)
        : Communicator(timers ? std::move(timers) : std::make_shared<TimingReport>()),
          group_(std::move(group)),
          rank_(rank) {}

    int rank() const noexcept override { return rank_; }
    int size() const noexcept override { return group_->size; }
    void barrier() override { group_->arrive_and_wait(); }
    std::string session_id() const override { return group_->world->session; }

    std::unique_ptr<Communicator> split(int color, int key) override {
        const std::uint64_t split_id = splits_++;
        Matrix payload(1, 2);
        payload << static_cast<double>(color), static_cast<double>(key);
        std::shared_ptr<GroupState> child;
        int child_rank = 0;
        exchange({1, 2, std::span<const double>(payload.data(), 2)}, [&](std::span<const Contribution> parts) {
            std::vector<std::pair<int, int>> members;  // (key, parent rank)
            for (int r = 0; r < static_cast<int>(parts.size()); ++r)
                if (static_cast<int>(parts[r].data[0]) == color)
                    members.emplace_back(static_cast<int>(parts[r].data[1]), r);
            std::sort(members.begin(), members.end());
            child_rank = static_cast<int>(std::find(members.begin(), members.end(), std::pair{key, rank_}) -
                                          members.begin());
            const int n = static_cast<int>(members.size());

            std::lock_guard lock(group_->mutex);
            auto& pending = group_->children[{split_id, color}];
            if (!pending.group) {
                pending.group = std::make_shared<GroupState>(n, group_->world);
                pending.remaining = n;
                group_->world->enroll(pending.group);
            }
            child = pending.group;
            if (--pending.remaining == 0) group_->children.erase({split_id, color});
        });
        return std::make_unique<InProcessCommunicator>(std::move(child), child_rank, shared_timers());
    }

protected:
    void exchange(const Contribution& mine, const Consumer& consume) override {
        group_->slots[rank_] = &mine;
        group_->arrive_and_wait();
        std::vector<Contribution> parts;
        parts.reserve(group_->slots.size());
        for (const auto* c : group_->slots) parts.push_back(*c);
        std::exception_ptr failure;
        try {
            consume(parts);
        } catch (...) {
            failure = std::current_exception();
        }
        group_->arrive_and_wait();
        if (failure) std::rethrow_exception(failure);
    }

private:
    std::shared_ptr<GroupState> group_;
    int rank_;
    std::uint64_t splits_ = 0;
};

}  // namespace

void run_spmd(int ranks, const std::function<void(Communicator&)>& body) {
    if (ranks < 1) throw DimensionError("run_spmd needs at least one rank");
    auto world = std::make_shared<WorldState>();
    world->session = new_session_id();
    auto group = std::make_shared<GroupState>(ranks, world);
    world->enroll(group);

    if (ranks == 1) {
        InProcessCommunicator comm(group, 0);
        body(comm);
        return;
    }

    std::mutex failure_mutex;
    std::exception_ptr first_failure;
    std::vector<std::thread> workers;
    workers.reserve(ranks);
    for (int r = 0; r < ranks; ++r) {
        workers.emplace_back([&, r] {
            InProcessCommunicator comm(group, r);
            try {
                body(comm);
            } catch (const SpmdAborted&) {
            } catch (...) {
                {
                    std::lock_guard lock(failure_mutex);
                    if (!first_failure) first_failure = std::current_exception();
                }
                world->abort();
            }
        });
    }
    for (auto& w : workers) w.join();
    if (first_failure) std::rethrow_exception(first_failure);
}

// ---------------------------------------------------------------------------
// Grids

ProcessGrid::ProcessGrid(std::vector<int> dims) : dims_(std::move(dims)) {
    if (dims_.empty()) throw DimensionError("process grid needs at least one dimension");
    for (int d : dims_)
        if (d < 1) throw DimensionError("process grid extents must be positive");
    size_ = std::accumulate(dims_.begin(), dims_.end(), 1, std::multiplies<>());
}

std::vector<int> ProcessGrid::coords(int rank) const {
    if (rank < 0 || rank >= size_) throw IndexError("rank " + std::to_string(rank) + " outside grid");
    std::vector<int> c(dims_.size());
    for (std::size_t k = dims_.size(); k-- > 0;) {
        c[k] = rank % dims_[k];
        rank /= dims_[k];
    }
    return c;
}

int ProcessGrid::rank_of(std::span<const int> coords) const {
    if (coords.size() != dims_.size()) throw IndexError("coordinate arity does not match grid");
    int r = 0;
    for (std::size_t k = 0; k < dims_.size(); ++k) {
        if (coords[k] < 0 || coords[k] >= dims_[k]) throw IndexError("grid coordinate out of range");
        r = r * dims_[k] + coords[k];
    }
    return r;
}

MatrixGrid::MatrixGrid(Communicator& world, int rows, int cols)
    : world_(&world), rows_(rows), cols_(cols), i_(0), j_(0) {
    if (rows < 1 || cols < 1 || rows * cols != world.size())
        throw DimensionError("matrix grid " + std::to_string(rows) + "x" + std::to_string(cols) +
                             " does not match " + std::to_string(world.size()) + " ranks");
    i_ = world.rank() / cols;
    j_ = world.rank() % cols;
    row_ = world.split(i_, j_);
    col_ = world.split(j_, i_);
}

}  // namespace ntt
