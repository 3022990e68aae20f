#pragma once

#include <variant>

#include "omvp/policy/recurrent.hpp"
#include "omvp/policy/transformer.hpp"

namespace omvp::policy {

/// Either agent network behind one interface. Holds parameter indices only, so the
/// same object serves the online and the target parameter sets.
class AgentNet {
public:
    AgentNet() = default;
    explicit AgentNet(TransformerPolicy net) : net_(std::move(net)) {}
    explicit AgentNet(RecurrentPolicy net) : net_(std::move(net)) {}

    bool is_transformer() const { return std::holds_alternative<TransformerPolicy>(net_); }
    const TransformerPolicy& transformer() const { return std::get<TransformerPolicy>(net_); }

    std::size_t hidden_width() const {
        return std::visit([](const auto& n) { return n.hidden_width(); }, net_);
    }
    std::size_t hidden_rows(std::size_t agents) const {
        return std::visit([agents](const auto& n) { return n.hidden_rows(agents); }, net_);
    }
    PolicyOutput forward(const Bound& p, Var features, Var hidden, std::size_t agents,
                         bool keep_attention = false) const {
        return std::visit([&](const auto& n) { return n.forward(p, features, hidden, agents, keep_attention); },
                          net_);
    }

private:
    std::variant<TransformerPolicy, RecurrentPolicy> net_;
};

}  // namespace omvp::policy
