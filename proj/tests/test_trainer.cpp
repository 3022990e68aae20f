#include <gtest/gtest.h>

#include <array>
#include <sstream>

#include "omvp/tensor/grad_check.hpp"
#include "omvp/trainer/train.hpp"

using namespace omvp;
using namespace omvp::trainer;

namespace {

TrainConfig tiny(Algorithm alg = Algorithm::T3Qmix) {
    TrainConfig c;
    c.env.width = 7;
    c.env.pursuers = 2;
    c.env.evaders = 1;
    c.env.horizon = 12;
    c.algorithm = alg;
    c.model.embed = 10;
    c.model.heads = 2;
    c.model.rnn_hidden = 8;
    c.model.mixer_hidden = 8;
    c.batch_size = 4;
    c.replay_capacity = 8;
    c.total_steps = 300;
    c.eval_interval = 100;
    c.eval_episodes = 3;
    c.target_update = 5;
    c.seed = 11;
    return c;
}

ReplayBuffer filled_replay(const TrainConfig& cfg, const Networks& nets, std::size_t n, double eps = 1.0) {
    ReplayBuffer rb(std::max<std::size_t>(n, 1));
    for (std::size_t i = 0; i < n; ++i)
        rb.push(collect_episode(cfg.env, nets, nets.online, eps, 100 + i, window_length(cfg)));
    return rb;
}

}  // namespace

TEST(Epsilon, Schedule) {
    TrainConfig c;
    EXPECT_EQ(epsilon_at(0, c), 1.0);
    EXPECT_NEAR(epsilon_at(9000, c), 0.1, 1e-12);
    EXPECT_EQ(epsilon_at(50000, c), 0.1);
    EXPECT_NEAR(epsilon_at(4000, c), 0.6, 1e-12);
    double prev = 1.0;
    for (long s = 0; s < 20000; s += 37) {
        const double e = epsilon_at(s, c);
        EXPECT_LE(e, prev);
        EXPECT_GE(e, c.epsilon_min);
        EXPECT_LE(e, 1.0);
        prev = e;
    }
    EXPECT_THROW(epsilon_at(-1, c), ContractError);
}

TEST(SelectActions, GreedyLimitAndTies) {
    std::mt19937_64 rng(1);
    Tensor q = Tensor::matrix(3, 5, {0, 1, 3, 2, 3, 5, 5, 5, 5, 5, -1, -2, -3, -4, -0.5});
    for (int i = 0; i < 100; ++i) {
        const auto a = select_actions(q, 0.0, rng);
        EXPECT_EQ(a[0], env::Action::TurnLeft);  // first of the tied maxima at index 2
        EXPECT_EQ(a[1], env::Action::Forward);
        EXPECT_EQ(a[2], env::Action::Stop);
    }
    EXPECT_THROW(select_actions(q, 1.5, rng), ContractError);
}

TEST(SelectActions, FrequenciesMatchEpsilonGreedy) {
    std::mt19937_64 rng(2);
    Tensor q = Tensor::matrix(1, 5, {0.0, 0.0, 0.0, 1.0, 0.0});
    for (double eps : {0.1, 1.0}) {
        std::array<long, 5> counts{};
        const long draws = 1'000'000;
        for (long i = 0; i < draws; ++i) ++counts[static_cast<std::size_t>(select_actions(q, eps, rng)[0])];
        for (std::size_t a = 0; a < 5; ++a) {
            const double expect = a == 3 ? 1.0 - eps + eps / 5.0 : eps / 5.0;
            EXPECT_NEAR(static_cast<double>(counts[a]) / draws, expect, 0.002) << "eps " << eps << " action " << a;
        }
    }
}

TEST(CollectEpisode, RandomPolicyIsLegalAndBounded) {
    auto cfg = tiny();
    cfg.env.width = 13;
    cfg.env.pursuers = 8;
    cfg.env.evaders = 4;
    cfg.env.horizon = 50;
    auto nets = make_networks(cfg);
    for (std::uint64_t s = 0; s < 20; ++s) {
        const Episode ep = collect_episode(cfg.env, nets, nets.online, 1.0, s);
        EXPECT_LE(ep.length(), 50u);
        EXPECT_EQ(ep.frames.size(), ep.length() + 1);
        EXPECT_EQ(ep.actions.size(), 8 * ep.length());
        EXPECT_LE(ep.total_reward(), 4.0);
        EXPECT_EQ(ep.hidden.size(), ((ep.length() + 4) / 5) * ep.hidden_size);
        for (const auto& f : ep.frames)
            for (const auto& p : f.pursuers) EXPECT_TRUE(env::build_map(13).is_road(p.position));
    }
}

TEST(CollectEpisode, Deterministic) {
    auto cfg = tiny();
    auto nets = make_networks(cfg);
    EXPECT_EQ(collect_episode(cfg.env, nets, nets.online, 0.3, 5), collect_episode(cfg.env, nets, nets.online, 0.3, 5));
    auto rnn = make_networks(tiny(Algorithm::Qmix));
    EXPECT_EQ(collect_episode(cfg.env, rnn, rnn.online, 0.3, 5), collect_episode(cfg.env, rnn, rnn.online, 0.3, 5));
}

TEST(CollectEpisode, AdjacentStillEvaderCapturedAtFirstStep) {
    // Pursuer at the intersection (2,2) facing east, evader parked at (2,3).
    auto w = env::reset(tiny().env, 1);
    w.pursuers = {{{2, 2}, env::Heading::East, env::VehicleKind::Pursuer, true},
                  {{6, 6}, env::Heading::North, env::VehicleKind::Pursuer, true}};
    w.evaders = {{{2, 3}, env::Heading::East, env::VehicleKind::Evader, true}};
    w.plans = {{env::StrategyTag::Still, {2, 3}, {1, 3}, 0}};
    // oracle Q: Forward for the adjacent pursuer, Stop for the other
    Tensor q = Tensor::matrix(2, 5, {1, 0, 0, 0, 0, 0, 0, 0, 0, 1});
    std::mt19937_64 rng(0);
    const auto out = env::step(w, select_actions(q, 0.0, rng));
    EXPECT_EQ(out.global_reward, 1.0);
    EXPECT_EQ(out.next.t, 1);
    EXPECT_TRUE(out.done);
}

TEST(Targets, BootstrapExamples) {
    EXPECT_EQ(bootstrap_target(1.0, 0.95, true, 123.0), 1.0);
    EXPECT_EQ(bootstrap_target(0.5, 0.0, false, 7.0), 0.5);
    // perfect values for rewards 1, 1, 1 then terminal
    const double v2 = bootstrap_target(1.0, 0.95, true, 0.0);
    const double v1 = bootstrap_target(1.0, 0.95, false, v2);
    const double v0 = bootstrap_target(1.0, 0.95, false, v1);
    EXPECT_NEAR(v0, 2.8525, 1e-15);
}

TEST(Targets, MyopicAndTerminalOnReplay) {
    auto cfg = tiny();
    cfg.env.horizon = 30;
    auto nets = make_networks(cfg);
    auto rb = filled_replay(cfg, nets, 8);
    std::mt19937_64 rng(3);
    const auto windows = sample_windows(rb, 8, rng);
    const auto pb = prepare_batch(windows, nets, cfg.env, window_length(cfg));
    const auto y0 = td_targets(pb, nets, 0.0, false, {});
    for (std::size_t i = 0; i < y0.size(); ++i) EXPECT_EQ(y0[i], pb.rewards[i]);
    const auto y = td_targets(pb, nets, 0.95, false, {});
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (pb.terminal[i] != 0.0) {
            EXPECT_EQ(y[i], pb.rewards[i]);
        }
    }
}

TEST(Targets, EmptyBatchRejected) {
    auto cfg = tiny();
    auto nets = make_networks(cfg);
    EXPECT_THROW(prepare_batch({}, nets, cfg.env, 5), ContractError);
}

TEST(Targets, WindowsStartAtStoredHidden) {
    auto cfg = tiny();
    cfg.env.horizon = 30;
    auto nets = make_networks(cfg);
    auto rb = filled_replay(cfg, nets, 8);
    std::mt19937_64 rng(4);
    for (int i = 0; i < 50; ++i)
        for (const auto& w : sample_windows(rb, 4, rng)) {
            EXPECT_EQ(w.start % 5, 0u);
            EXPECT_LT(w.start, w.episode->length());
        }
}

class TdGradient : public ::testing::TestWithParam<Algorithm> {};

TEST_P(TdGradient, MatchesFiniteDifferences) {
    auto cfg = tiny(GetParam());
    cfg.env.horizon = 20;
    auto nets = make_networks(cfg);
    // nudge target away from online so both parameter sets matter
    for (auto& p : nets.target)
        for (auto& x : p.value.values()) x *= 0.9;
    auto rb = filled_replay(cfg, nets, 4);
    std::mt19937_64 rng(5);
    const auto pb = prepare_batch(sample_windows(rb, 3, rng), nets, cfg.env, 5);
    tensor::LossFn f = [&](tensor::Graph& g, const tensor::Bound& b) {
        return td_loss_graph(g, b, pb, nets, cfg.gamma, true);
    };
    const auto rep = tensor::grad_check_report(f, nets.online, 1e-6);
    EXPECT_LT(rep.max_rel_error, 1e-5) << rep.worst_param << "[" << rep.worst_index << "]";
}

INSTANTIATE_TEST_SUITE_P(Algorithms, TdGradient,
                         ::testing::Values(Algorithm::T3Qmix, Algorithm::T3Vdn, Algorithm::Qmix, Algorithm::Vdn));

TEST(UpdateTargets, CopySemantics) {
    auto cfg = tiny();
    auto nets = make_networks(cfg);
    for (auto& p : nets.online)
        for (auto& x : p.value.values()) x += 0.01;
    EXPECT_NE(nets.online, nets.target);
    update_targets(nets);
    EXPECT_EQ(nets.online, nets.target);
    const auto once = nets.target;
    update_targets(nets);
    EXPECT_EQ(nets.target, once);

    auto rb = filled_replay(cfg, nets, 4);
    std::mt19937_64 rng(6);
    const auto windows = sample_windows(rb, 4, rng);
    const auto pb = prepare_batch(windows, nets, cfg.env, 5);
    // identical parameter sets give identical Q on the same input
    tensor::Graph g(false);
    auto on = nets.agent.forward(tensor::bind(g, nets.online), g.constant(pb.features[0]), g.constant(pb.hidden), 2);
    auto tg = nets.agent.forward(tensor::bind(g, nets.target), g.constant(pb.features[0]), g.constant(pb.hidden), 2);
    EXPECT_EQ(on.q.value(), tg.q.value());

    auto res = td_loss(windows, nets, cfg);
    auto st = tensor::make_adam(nets.online);
    tensor::adam_step(nets.online, res.grads, st, 0.01);
    EXPECT_EQ(nets.target, once);
    EXPECT_NE(nets.online, once);
}

TEST(Replay, FifoEvictionAndConservation) {
    auto cfg = tiny();
    auto nets = make_networks(cfg);
    ReplayBuffer rb(3);
    std::vector<Episode> eps;
    for (std::uint64_t s = 0; s < 5; ++s) eps.push_back(collect_episode(cfg.env, nets, nets.online, 1.0, s));
    for (const auto& e : eps) rb.push(e);
    ASSERT_EQ(rb.size(), 3u);
    EXPECT_EQ(rb[0], eps[2]);
    EXPECT_EQ(rb[2], eps[4]);

    Episode bad = eps[0];
    bad.agent_rewards[0] += 0.5;
    EXPECT_THROW(rb.push(bad), ContractError);
    std::mt19937_64 rng(7);
    EXPECT_THROW(rb.sample(4, rng), ContractError);
}

TEST(Evaluate, RandomWeightsFullScenario) {
    TrainConfig cfg;
    cfg.model.embed = 20;
    cfg.model.heads = 5;
    auto nets = make_networks(cfg);
    const auto r = evaluate(nets, nets.online, cfg.env, 50, 9);
    EXPECT_TRUE(std::isfinite(r.mean_reward));
    EXPECT_GE(r.mean_reward, 0.0);
    EXPECT_LE(r.mean_reward, 4.0);
    EXPECT_GE(r.capture_rate, 0.0);
    EXPECT_LE(r.capture_rate, 1.0);
    EXPECT_THROW(evaluate(nets, nets.online, cfg.env, 0, 9), ContractError);
}

TEST(Evaluate, PinnedStillIsRepeatable) {
    auto cfg = tiny();
    cfg.env.pinned_strategy = env::StrategyTag::Still;
    auto nets = make_networks(cfg);
    const auto a = evaluate(nets, nets.online, cfg.env, 10, 3);
    const auto b = evaluate(nets, nets.online, cfg.env, 10, 3);
    EXPECT_EQ(a.mean_reward, b.mean_reward);
    EXPECT_EQ(a.capture_rate, b.capture_rate);
    EXPECT_EQ(a.mean_first_capture, b.mean_first_capture);
}

TEST(Train, ZeroStepsIsNoOp) {
    auto cfg = tiny();
    cfg.total_steps = 0;
    const auto res = train(cfg);
    EXPECT_TRUE(res.metrics.empty());
    EXPECT_EQ(res.nets.online, make_networks(cfg).online);
    EXPECT_EQ(res.train_steps, 0);
}

TEST(Train, ReproducibleMetrics) {
    for (auto alg : {Algorithm::T3Qmix, Algorithm::Vdn}) {
        auto cfg = tiny(alg);
        auto csv = [&] {
            std::ostringstream os;
            write_metrics(os, train(cfg).metrics);
            return os.str();
        };
        const std::string a = csv();
        EXPECT_EQ(a, csv());
        EXPECT_GE(std::count(a.begin(), a.end(), '\n'), 4);
    }
}

TEST(Train, MaxTrainStepsAndTargetCadence) {
    auto cfg = tiny();
    cfg.max_train_steps = 7;
    const auto res = train(cfg);
    EXPECT_EQ(res.train_steps, 7);
    EXPECT_GE(res.env_steps, cfg.total_steps);
}

TEST(Checkpoint, RoundTripThroughNetworks) {
    auto cfg = tiny();
    auto nets = make_networks(cfg);
    std::stringstream ss;
    tensor::write_checkpoint(ss, to_checkpoint(nets, cfg.env));
    const auto back = from_checkpoint(tensor::read_checkpoint(ss), cfg.env);
    EXPECT_EQ(back.online, nets.online);
    EXPECT_EQ(back.algorithm, nets.algorithm);

    auto other = cfg.env;
    other.pursuers = 3;
    EXPECT_THROW(from_checkpoint(to_checkpoint(nets, cfg.env), other), ContractError);
    other = cfg.env;
    other.width = 9;
    EXPECT_THROW(from_checkpoint(to_checkpoint(nets, cfg.env), other), ContractError);
}
