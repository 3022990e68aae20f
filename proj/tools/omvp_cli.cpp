#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "omvp/harness/commands.hpp"

using namespace omvp;

namespace {

void add_scenario(CLI::App* cmd, harness::ScenarioOptions& s) {
    cmd->add_option_function<std::string>("--scenario", [&s](const std::string& v) { s.scenario = v; },
                                          "pursuers v evaders, e.g. 8v4");
    cmd->add_option_function<int>("--width", [&s](int v) { s.width = v; }, "grid width (odd)");
    cmd->add_option_function<int>("--horizon", [&s](int v) { s.horizon = v; }, "episode length cap");
    cmd->add_flag("--pin-still", s.pin_still, "evaders keep still");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-vehicle pursuit on a city grid: train, evaluate, render, inspect attention"};
    app.require_subcommand(1);

    std::string config;
    auto* train = app.add_subcommand("train", "train from a config file");
    train->add_option("config", config, "key = value config file")->required();

    harness::EvalOptions ev;
    auto* eval = app.add_subcommand("eval", "greedy evaluation of a checkpoint");
    eval->add_option("checkpoint", ev.source, "checkpoint file or 'random'")->required();
    add_scenario(eval, ev.scenario);
    eval->add_option("--episodes", ev.episodes, "episodes")->capture_default_str();
    eval->add_option("--seed", ev.seed, "evaluation seed")->capture_default_str();
    eval->add_option("--csv", ev.csv, "also write a one-row CSV here");

    harness::RenderOptions rd;
    auto* render = app.add_subcommand("render", "print one episode as text frames");
    render->add_option("checkpoint", rd.source, "checkpoint file or 'random'")->capture_default_str();
    add_scenario(render, rd.scenario);
    render->add_option("--seed", rd.seed, "episode seed")->capture_default_str();
    render->add_option("--trace", rd.trace, "write a JSON-lines step trace here");

    harness::AttentionOptions at;
    std::string at_out;
    auto* attention = app.add_subcommand("attention", "export attention weights at step t and t-1");
    attention->add_option("checkpoint", at.source, "transformer checkpoint")->required();
    add_scenario(attention, at.scenario);
    attention->add_option("--seed", at.seed, "episode seed")->capture_default_str();
    attention->add_option("--t", at.t, "step")->capture_default_str();
    attention->add_option("--out", at_out, "CSV path (default: stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            harness::cmd_train(config, std::cout);
        } else if (*eval) {
            harness::cmd_eval(ev, std::cout);
        } else if (*render) {
            harness::cmd_render(rd, std::cout);
        } else if (*attention) {
            if (at_out.empty()) {
                harness::cmd_attention(at, std::cout, std::cerr);
            } else {
                std::ofstream f(at_out);
                if (!f) throw std::runtime_error("cannot write " + at_out);
                harness::cmd_attention(at, f, std::cout);
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "omvp: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
