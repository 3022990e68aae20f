#pragma once

#include <deque>
#include <random>

#include "omvp/trainer/rollout.hpp"

namespace omvp::trainer {

/// FIFO episode store. Rejects episodes whose per-agent rewards do not add up to the
/// global reward at some step.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw InvalidConfig("replay capacity must be positive");
    }

    void push(Episode ep) {
        for (std::size_t t = 0; t < ep.length(); ++t) {
            double s = 0.0;
            for (std::size_t k = 0; k < ep.agents; ++k) s += ep.agent_rewards[t * ep.agents + k];
            if (s != ep.rewards[t]) throw ContractError("replay: per-agent rewards do not sum to the global reward");
        }
        if (episodes_.size() == capacity_) episodes_.pop_front();
        episodes_.push_back(std::move(ep));
    }

    std::size_t size() const { return episodes_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Episode& operator[](std::size_t i) const { return episodes_[i]; }

    /// `n` distinct episodes drawn uniformly (n <= size()).
    std::vector<const Episode*> sample(std::size_t n, std::mt19937_64& rng) const {
        if (n == 0 || n > episodes_.size()) throw ContractError("replay: cannot sample that many episodes");
        std::vector<std::size_t> idx(episodes_.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::vector<const Episode*> out;
        for (std::size_t i = 0; i < n; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
            std::swap(idx[i], idx[pick(rng)]);
            out.push_back(&episodes_[idx[i]]);
        }
        return out;
    }

private:
    std::size_t capacity_;
    std::deque<Episode> episodes_;
};

}  // namespace omvp::trainer
