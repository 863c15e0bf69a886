#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ntt/tensor.hpp"

namespace ntt {

// ---------------------------------------------------------------------------
// Timing instrumentation

/// Local compute categories first, then the three collectives.
enum class TimingCategory : int { GR, MM, MAD, Norm, INIT, AG, AR, RSC };
inline constexpr std::size_t kTimingCategories = 8;

class TimingReport {
public:
    double seconds(TimingCategory c) const noexcept { return seconds_[static_cast<int>(c)]; }
    void add(TimingCategory c, double s) noexcept { seconds_[static_cast<int>(c)] += s; }
    void reset() noexcept { seconds_.fill(0.0); }

    double compute_seconds() const noexcept;
    double communication_seconds() const noexcept;
    double total_seconds() const noexcept { return compute_seconds() + communication_seconds(); }

    TimingReport& operator+=(const TimingReport& other) noexcept;
    TimingReport& operator/=(double divisor) noexcept;

    static std::string_view name(TimingCategory c) noexcept;
    static constexpr std::array<TimingCategory, kTimingCategories> all() noexcept {
        return {TimingCategory::GR,   TimingCategory::MM, TimingCategory::MAD, TimingCategory::Norm,
                TimingCategory::INIT, TimingCategory::AG, TimingCategory::AR,  TimingCategory::RSC};
    }

private:
    std::array<double, kTimingCategories> seconds_{};
};

class ScopedTimer {
public:
    ScopedTimer(TimingReport& report, TimingCategory category)
        : report_(report), category_(category), start_(std::chrono::steady_clock::now()) {}
    ~ScopedTimer() {
        report_.add(category_, std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count());
    }
    ScopedTimer(const ScopedTimer&) = delete;
    ScopedTimer& operator=(const ScopedTimer&) = delete;

private:
    TimingReport& report_;
    TimingCategory category_;
    std::chrono::steady_clock::time_point start_;
};

// ---------------------------------------------------------------------------
// Communicator

enum class Axis { Rows, Cols };

/// SPMD communicator. Collectives must be called by every member of the
/// group in the same order with compatible payloads; reductions accumulate in
/// rank-ascending order so results are reproducible bit for bit.
///
/// Backends implement the single `exchange` primitive; every public
/// collective is expressed on top of it.
class Communicator {
public:
    /// One rank's payload as seen by the others during an exchange.
    struct Contribution {
        Index rows = 0;
        Index cols = 0;
        std::span<const double> data;
    };
    using Consumer = std::function<void(std::span<const Contribution>)>;

    virtual ~Communicator() = default;

    virtual int rank() const noexcept = 0;
    virtual int size() const noexcept = 0;
    virtual void barrier() = 0;

    /// Collective: ranks sharing `color` form a new group ordered by (key, rank).
    virtual std::unique_ptr<Communicator> split(int color, int key) = 0;

    /// Identifier shared by all ranks of the world; used to name scratch space.
    virtual std::string session_id() const = 0;

    /// Per-rank sequence number that advances identically on every rank.
    std::uint64_t next_sequence() noexcept { return sequence_++; }

    // Collectives -----------------------------------------------------------

    /// Every rank receives all blocks in rank order.
    std::vector<Matrix> all_gather(const Matrix& local);
    /// Blocks stacked vertically (Axis::Rows) or side by side (Axis::Cols); their
    /// lengths along that axis may differ.
    Matrix all_gather_concat(const Matrix& local, Axis axis);

    Matrix all_reduce_sum(const Matrix& local);
    double all_reduce_sum(double local);
    std::vector<double> all_reduce_sum(std::span<const double> local);

    /// Rank k receives slice k (along `axis`) of the elementwise group sum.
    Matrix reduce_scatter_sum(const Matrix& local, Axis axis);
    /// Uneven variant: rank k receives counts[k] consecutive rows (or columns).
    Matrix reduce_scatter_sum(const Matrix& local, Axis axis, std::span<const Index> counts);

    TimingReport& timers() noexcept { return *timers_; }
    const TimingReport& timers() const noexcept { return *timers_; }

protected:
    Communicator() : timers_(std::make_shared<TimingReport>()) {}
    explicit Communicator(std::shared_ptr<TimingReport> timers) : timers_(std::move(timers)) {}

    /// Makes every member's contribution visible (in rank order) to `consume`
    /// on every member. Contributions stay valid only for the duration of the call.
    virtual void exchange(const Contribution& mine, const Consumer& consume) = 0;

    std::shared_ptr<TimingReport> shared_timers() const { return timers_; }

private:
    std::shared_ptr<TimingReport> timers_;
    std::uint64_t sequence_ = 0;
};

/// Runs `body` on `ranks` concurrent in-process workers, each with its own
/// communicator over the same world. If any worker throws, the others are
/// released from pending collectives and the first failure is rethrown.
void run_spmd(int ranks, const std::function<void(Communicator&)>& body);

// ---------------------------------------------------------------------------
// Grids

/// Cartesian factorization of p with row-major rank layout.
class ProcessGrid {
public:
    explicit ProcessGrid(std::vector<int> dims);

    const std::vector<int>& dims() const noexcept { return dims_; }
    int ndims() const noexcept { return static_cast<int>(dims_.size()); }
    int size() const noexcept { return size_; }

    std::vector<int> coords(int rank) const;
    int rank_of(std::span<const int> coords) const;

private:
    std::vector<int> dims_;
    int size_ = 1;
};

/// A p_r x p_c view of a communicator: rank (i, j) = i * p_c + j, with the
/// processor-row group (fixed i, ordered by j) and column group (fixed j,
/// ordered by i). Construction is collective.
class MatrixGrid {
public:
    MatrixGrid(Communicator& world, int rows, int cols);

    Communicator& world() const noexcept { return *world_; }
    Communicator& row_group() const noexcept { return *row_; }
    Communicator& col_group() const noexcept { return *col_; }

    int rows() const noexcept { return rows_; }
    int cols() const noexcept { return cols_; }
    int size() const noexcept { return rows_ * cols_; }
    int i() const noexcept { return i_; }
    int j() const noexcept { return j_; }

private:
    Communicator* world_;
    int rows_, cols_, i_, j_;
    std::unique_ptr<Communicator> row_;
    std::unique_ptr<Communicator> col_;
};

}  // namespace ntt
