// SPDX-License-Identifier: Apache-2.0
//
// cvqkd-sim — moments-level link simulator for LLO CV-QKD over free-space
// optical channels
// Copyright (C) 2026 the cvqkd-sim authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "cvqkd/scenario.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::int64_t seed = -1;
    std::int64_t frames = -1;
    std::string out_dir;
    int workers = 0;

    void attach(CLI::App* app) {
        app->add_option("--config", config_path, "configuration file (INI)");
        app->add_option("--seed", seed, "override the run seed");
        app->add_option("--frames", frames, "override the frame count");
        app->add_option("--out", out_dir, "override the output directory");
        app->add_option("--workers", workers, "frame-level worker threads");
    }

    cvqkd::ScenarioConfig build(cvqkd::ScenarioKind kind) const {
        cvqkd::IniConfig ini;
        if (!config_path.empty()) ini = cvqkd::IniConfig::load(config_path);
        cvqkd::ScenarioConfig cfg = cvqkd::ScenarioConfig::from_ini(ini);
        cfg.scenario = kind;
        if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
        if (frames >= 0) cfg.frames = static_cast<std::size_t>(frames);
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        if (workers > 0) cfg.workers = workers;
        return cfg;
    }
};

void fail_json(const char* kind, const std::string& message) {
    cvqkd::Json err;
    err["error"] = kind;
    err["message"] = message;
    std::cerr << err.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cvqkd — free-space LLO CV-QKD link simulator"};
    app.require_subcommand(1);

    CommonArgs cal_args, sim_args, sweep_args, chan_args;
    std::string sim_scenario = "fixed_loss";

    CLI::App* cal = app.add_subcommand("calibrate", "record the back-to-back pilot reference");
    cal_args.attach(cal);

    CLI::App* sim = app.add_subcommand("simulate", "run a link scenario end to end");
    sim_args.attach(sim);
    sim->add_option("--scenario", sim_scenario, "fixed_loss | turbulence")
        ->check(CLI::IsMember({"fixed_loss", "turbulence"}));

    CLI::App* sweep = app.add_subcommand("sweep", "key-rate sweep over a synthetic turbulent run");
    sweep_args.attach(sweep);

    CLI::App* chan = app.add_subcommand("channel-model", "turbulence statistics without DSP");
    chan_args.attach(chan);

    // direct key-rate evaluation
    CLI::App* kr = app.add_subcommand("keyrate", "evaluate the secret key rate for one condition");
    double kr_va = 12.4, kr_tdb = -20.0, kr_eps = 0.03, kr_eta = 0.56, kr_nu = 0.1;
    double kr_beta = 0.96, kr_fer = 0.30, kr_fm = 1e9, kr_n = 1e6;
    bool kr_finite = false;
    std::string kr_out;
    kr->add_option("--va", kr_va, "modulation variance [SNU]");
    kr->add_option("--t-db", kr_tdb, "channel transmittance [dB, negative]");
    kr->add_option("--epsilon", kr_eps, "excess noise at the channel input [SNU]");
    kr->add_option("--eta", kr_eta, "detector efficiency");
    kr->add_option("--nu-el", kr_nu, "electrical noise [SNU]");
    kr->add_option("--beta", kr_beta, "reconciliation efficiency");
    kr->add_option("--fer", kr_fer, "frame error rate");
    kr->add_option("--fm", kr_fm, "repetition rate [Hz]");
    kr->add_flag("--finite-size", kr_finite, "apply the finite-size penalty");
    kr->add_option("--block", kr_n, "block size for the finite-size penalty");
    kr->add_option("--out", kr_out, "write the report JSON to this file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cal->parsed()) {
            cvqkd::run_scenario(cal_args.build(cvqkd::ScenarioKind::calibrate));
        } else if (sim->parsed()) {
            cvqkd::run_scenario(sim_args.build(cvqkd::scenario_kind_from_string(sim_scenario)));
        } else if (sweep->parsed()) {
            cvqkd::run_scenario(sweep_args.build(cvqkd::ScenarioKind::keyrate_sweep));
        } else if (chan->parsed()) {
            cvqkd::run_scenario(chan_args.build(cvqkd::ScenarioKind::channel_model));
        } else if (kr->parsed()) {
            cvqkd::SkrInput in;
            in.v_a = kr_va;
            in.t = cvqkd::db_to_lin(kr_tdb);
            in.epsilon = kr_eps;
            in.eta = kr_eta;
            in.nu_el = kr_nu;
            in.beta = kr_beta;
            in.fer = kr_fer;
            in.f_m = kr_fm;
            in.asymptotic = !kr_finite;
            in.n_block = kr_n;
            const cvqkd::SkrReport rep = cvqkd::secret_key_rate(in);
            cvqkd::Json j;
            j["input"] = {{"v_a", in.v_a},   {"t", in.t},         {"epsilon", in.epsilon},
                          {"eta", in.eta},   {"nu_el", in.nu_el}, {"beta", in.beta},
                          {"fer", in.fer},   {"f_m", in.f_m},     {"asymptotic", in.asymptotic},
                          {"n_block", in.n_block}};
            j["i_ab"] = rep.i_ab;
            j["kappa_be"] = rep.kappa_be;
            j["delta_n"] = rep.delta_n;
            j["bracket"] = rep.bracket;
            j["rate_bps"] = rep.rate;
            j["lambda"] = {rep.lambda[0], rep.lambda[1], rep.lambda[2], rep.lambda[3],
                           rep.lambda[4]};
            j["abcd"] = {rep.a, rep.b, rep.c, rep.d};
            j["chi"] = {{"het", rep.chi_het}, {"line", rep.chi_line}, {"tot", rep.chi_tot}};
            if (kr_out.empty()) {
                std::cout << j.dump(2) << '\n';
            } else {
                std::ofstream f(kr_out);
                f << j.dump(2) << '\n';
            }
        }
    } catch (const cvqkd::ConfigError& e) {
        fail_json("config", e.what());
        return 2;
    } catch (const cvqkd::IoError& e) {
        fail_json("io", e.what());
        return 3;
    } catch (const cvqkd::Error& e) {
        fail_json("runtime", e.what());
        return 1;
    } catch (const std::exception& e) {
        fail_json("internal", e.what());
        return 1;
    }
    return 0;
}
