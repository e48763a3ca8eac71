#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "fpaccel/anderson.hpp"
#include "fpaccel/model.hpp"
#include "fpaccel/tape.hpp"
#include "fpaccel/tensor.hpp"

namespace fpaccel {

enum class AccelKind { none, aa, neural };

inline const char* accel_kind_name(AccelKind k) {
    switch (k) {
        case AccelKind::none: return "plain";
        case AccelKind::aa: return "aa";
        case AccelKind::neural: return "neural";
    }
    return "?";
}

inline AccelKind accel_kind_from_name(const std::string& s) {
    if (s == "none" || s == "plain") return AccelKind::none;
    if (s == "aa") return AccelKind::aa;
    if (s == "neural") return AccelKind::neural;
    throw config_error("unknown accelerator: " + s);
}

// Per-iteration statistics of one solve. fixed_point is tau-normalized for
// cone problems; primal/dual/gap/tau are zero-filled where a family has no
// such notion.
struct ResidualRecord {
    double fixed_point = 0.0;
    double primal = 0.0;
    double dual = 0.0;
    double gap = 0.0;
    double tau = 0.0;
};

struct SolveTrace {
    std::vector<ResidualRecord> records;
    Tensor final_iterate;
};

// One fixed-point problem instance seen through the runner: the map f, the
// context phi, the default start, residual definitions, and the residual
// normalizer R0 (a constant; no gradient flows through it).
struct FixedPointInstance {
    std::size_t dim = 0;
    Tensor context;
    Tensor default_init;
    double r0 = 1.0;      // normalizer for the tau-normalized residual
    double r0_raw = 1.0;  // normalizer for the un-normalized residual variant

    std::function<Tensor(const Tensor&)> step;
    std::function<VarRef(Tape&, VarRef)> step_taped;

    // family residual (tau-normalized for cone problems)
    std::function<double(const Tensor&, const Tensor&)> residual;
    std::function<VarRef(Tape&, VarRef, VarRef)> residual_taped;
    // un-normalized variant (the tau-normalization ablation trains on this)
    std::function<double(const Tensor&, const Tensor&)> residual_raw;
    std::function<VarRef(Tape&, VarRef, VarRef)> residual_raw_taped;

    // || [p; d] || at an iterate; null for families without primal/dual
    // structure
    std::function<double(const Tensor&)> final_pd;
    std::function<VarRef(Tape&, VarRef)> final_pd_taped;

    // full per-iteration record (x_t, x~_{t+1})
    std::function<ResidualRecord(const Tensor&, const Tensor&)> record;
};

struct RunConfig {
    AccelKind accel = AccelKind::none;
    int iters = 50;
    // early stop once the recorded fixed-point residual drops to tol;
    // a non-finite tol disables the check
    double tol = std::numeric_limits<double>::infinity();
    std::size_t aa_memory = 10;
    double aa_regularization = 1e-10;
};

// Algorithm: x_1 (and h_1) from the initializer, then for t = 1..T apply the
// map and let the accelerator revise the iterate. Plain iteration and
// Anderson Acceleration are the non-learned instances of the same loop.
inline SolveTrace run(const FixedPointInstance& inst, const RunConfig& cfg,
                      const AccelModel* model = nullptr) {
    if (cfg.iters < 1) throw config_error("run: iters must be >= 1");
    if (cfg.accel == AccelKind::neural && model == nullptr)
        throw config_error("run: neural acceleration needs a model");
    if (model != nullptr && cfg.accel == AccelKind::neural &&
        model->spec().iterate_dim != inst.dim)
        throw config_error("run: model iterate dim does not match instance");

    Tensor x = inst.default_init;
    Tensor h;
    if (cfg.accel == AccelKind::neural) {
        auto init = model->init_apply(inst.context, inst.default_init);
        x = std::move(init.first);
        h = std::move(init.second);
    }
    AAState aa(cfg.aa_memory, cfg.aa_regularization);

    SolveTrace trace;
    trace.records.reserve(static_cast<std::size_t>(cfg.iters));
    for (int t = 0; t < cfg.iters; ++t) {
        Tensor xt;
        try {
            xt = inst.step(x);
        } catch (const numeric_error& e) {
            throw numeric_error(std::string(e.what()) + " (iteration " + std::to_string(t + 1) +
                                ")");
        }
        trace.records.push_back(inst.record(x, xt));
        if (std::isfinite(cfg.tol) && trace.records.back().fixed_point <= cfg.tol) {
            trace.final_iterate = std::move(x);
            return trace;
        }
        switch (cfg.accel) {
            case AccelKind::none: x = std::move(xt); break;
            case AccelKind::aa: x = aa.update(x, xt); break;
            case AccelKind::neural: {
                auto next = model->acc_apply(x, xt, h);
                x = std::move(next.first);
                h = std::move(next.second);
                break;
            }
        }
    }
    trace.final_iterate = std::move(x);
    return trace;
}

// Batch of traces plus mean/std aggregation, serialized as CSV with columns
// iter,fp_residual,primal,dual,gap,tau: one block per instance, then a mean
// block and a std block.
class TraceReport {
public:
    TraceReport() = default;
    explicit TraceReport(std::vector<SolveTrace> traces) : traces_(std::move(traces)) {}

    const std::vector<SolveTrace>& traces() const { return traces_; }
    std::size_t instances() const { return traces_.size(); }

    std::size_t max_iters() const {
        std::size_t n = 0;
        for (const auto& t : traces_) n = std::max(n, t.records.size());
        return n;
    }

    // mean and std of each column at iteration index (instances that stopped
    // early repeat their last record, so aggregates stay defined)
    std::pair<ResidualRecord, ResidualRecord> aggregate(std::size_t iter) const {
        ResidualRecord mean, stdev;
        if (traces_.empty()) return {mean, stdev};
        auto fetch = [&](const SolveTrace& t) -> const ResidualRecord& {
            std::size_t i = std::min(iter, t.records.size() - 1);
            return t.records[i];
        };
        double n = static_cast<double>(traces_.size());
        for (const auto& t : traces_) {
            const ResidualRecord& r = fetch(t);
            mean.fixed_point += r.fixed_point;
            mean.primal += r.primal;
            mean.dual += r.dual;
            mean.gap += r.gap;
            mean.tau += r.tau;
        }
        mean.fixed_point /= n;
        mean.primal /= n;
        mean.dual /= n;
        mean.gap /= n;
        mean.tau /= n;
        for (const auto& t : traces_) {
            const ResidualRecord& r = fetch(t);
            stdev.fixed_point += sq(r.fixed_point - mean.fixed_point);
            stdev.primal += sq(r.primal - mean.primal);
            stdev.dual += sq(r.dual - mean.dual);
            stdev.gap += sq(r.gap - mean.gap);
            stdev.tau += sq(r.tau - mean.tau);
        }
        stdev.fixed_point = std::sqrt(stdev.fixed_point / n);
        stdev.primal = std::sqrt(stdev.primal / n);
        stdev.dual = std::sqrt(stdev.dual / n);
        stdev.gap = std::sqrt(stdev.gap / n);
        stdev.tau = std::sqrt(stdev.tau / n);
        return {mean, stdev};
    }

    std::string to_csv() const {
        std::ostringstream os;
        os.precision(17);
        os << "iter,fp_residual,primal,dual,gap,tau\n";
        for (std::size_t k = 0; k < traces_.size(); ++k) {
            os << "# instance " << k << "\n";
            const auto& recs = traces_[k].records;
            for (std::size_t i = 0; i < recs.size(); ++i) row(os, i + 1, recs[i]);
        }
        std::size_t iters = max_iters();
        os << "# aggregate mean\n";
        for (std::size_t i = 0; i < iters; ++i) row(os, i + 1, aggregate(i).first);
        os << "# aggregate std\n";
        for (std::size_t i = 0; i < iters; ++i) row(os, i + 1, aggregate(i).second);
        return os.str();
    }

private:
    static double sq(double v) { return v * v; }

    static void row(std::ostringstream& os, std::size_t iter, const ResidualRecord& r) {
        os << iter << "," << r.fixed_point << "," << r.primal << "," << r.dual << "," << r.gap
           << "," << r.tau << "\n";
    }

    std::vector<SolveTrace> traces_;
};

}  // namespace fpaccel
