#pragma once

#include "rbmdc/core/types.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace rbmdc {

struct AdamState {
    Vector m;
    Vector v;
    long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    AdamState() = default;
    explicit AdamState(Eigen::Index n) : m(Vector::Zero(n)), v(Vector::Zero(n)) {}
};

/// Bias-corrected Adam update of `params` in place.
inline void adam_step(Eigen::Ref<Vector> params, AdamState& state, const Eigen::Ref<const Vector>& grad, double lr) {
    require(params.size() == grad.size() && state.m.size() == grad.size() && state.v.size() == grad.size(),
            "adam_step: parameter, gradient and moment sizes differ");
    ++state.step;
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.epsilon);
}

/// Piecewise-constant learning rate: rate_i on [start_i, end_i).
class LrSchedule {
public:
    struct Segment {
        long start;
        long end;  // exclusive; max() means open-ended
        double rate;
    };
    static constexpr long kOpen = std::numeric_limits<long>::max();

    LrSchedule() : LrSchedule(std::vector<Segment>{{0, kOpen, 5e-4}}) {}
    explicit LrSchedule(std::vector<Segment> segments) : segments_(std::move(segments)) {
        require(!segments_.empty(), "learning-rate schedule is empty");
        require(segments_.front().start == 0, "learning-rate schedule must start at iteration 0");
        for (std::size_t i = 0; i < segments_.size(); ++i) {
            require(segments_[i].end > segments_[i].start, "learning-rate segment has nonpositive length");
            require(segments_[i].rate >= 0.0 && std::isfinite(segments_[i].rate), "learning rate must be >= 0");
            if (i + 1 < segments_.size()) {
                require(segments_[i].end == segments_[i + 1].start, "learning-rate segments must be contiguous");
            }
        }
        require(segments_.back().end == kOpen, "last learning-rate segment must be open-ended");
    }

    /// Three-stage schedule 5e-4 / 3e-4 / 1e-4 switching at `first` and `second`.
    static LrSchedule three_stage(long first, long second) {
        return LrSchedule({{0, first, 5e-4}, {first, second, 3e-4}, {second, kOpen, 1e-4}});
    }

    [[nodiscard]] double rate(long iteration) const {
        for (const auto& s : segments_) {
            if (iteration >= s.start && iteration < s.end) return s.rate;
        }
        return segments_.back().rate;
    }

    /// Boundaries multiplied by `factor` (at least one iteration per segment).
    [[nodiscard]] LrSchedule scaled(double factor) const {
        std::vector<Segment> out;
        long previous = 0;
        for (const auto& s : segments_) {
            long end = s.end == kOpen ? kOpen : std::max(previous + 1, static_cast<long>(std::lround(s.end * factor)));
            out.push_back({previous, end, s.rate});
            previous = end;
        }
        return LrSchedule(std::move(out));
    }

    [[nodiscard]] const std::vector<Segment>& segments() const { return segments_; }

private:
    std::vector<Segment> segments_;
};

}  // namespace rbmdc
