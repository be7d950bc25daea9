#include "prior/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace prior {

std::string to_string(Variant v) {
    switch (v) {
        case Variant::Pebble: return "pebble";
        case Variant::OPrior: return "oprior";
        case Variant::Prior: return "prior";
    }
    return "?";
}

Variant variant_from_string(const std::string& s) {
    std::string k;
    for (char c : s)
        if (c != '-' && c != '_') k += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (k == "pebble") return Variant::Pebble;
    if (k == "oprior") return Variant::OPrior;
    if (k == "prior") return Variant::Prior;
    throw std::invalid_argument("unknown variant: " + s);
}

namespace {

std::string describe(const std::vector<FieldError>& errors) {
    std::string out = "invalid config:";
    for (const auto& e : errors) out += " " + e.field + ": " + e.message + ";";
    return out;
}

}  // namespace

ConfigError::ConfigError(std::vector<FieldError> errors)
    : std::invalid_argument(describe(errors)), errors_(std::move(errors)) {}

void ExperimentConfig::set_variant(Variant v) {
    variant = v;
    if (v == Variant::Pebble) {
        lambda_p = lambda_r0 = lambda_r1 = 0.0;
    } else {
        lambda_p = 1.0;
        lambda_r0 = lambda_r1 = 0.5;
    }
}

std::size_t ExperimentConfig::effective_episode_length() const {
    return episode_length > 0 ? episode_length : 4 * static_cast<std::size_t>(std::max(grid_n - 1, 1));
}

std::size_t ExperimentConfig::effective_epc_length() const {
    return epc_length > 0 ? epc_length : 2 * static_cast<std::size_t>(std::max(grid_n - 1, 1));
}

std::size_t ExperimentConfig::sessions() const {
    if (queries_per_session == 0) return 0;
    return (query_budget + queries_per_session - 1) / queries_per_session;
}

std::vector<FieldError> ExperimentConfig::check() const {
    std::vector<FieldError> errors;
    const auto nonneg = [&](const char* name, double v) {
        if (!(v >= 0.0) || !std::isfinite(v)) errors.push_back({name, "must be a finite value >= 0"});
    };
    nonneg("lambda_p", lambda_p);
    nonneg("lambda_r0", lambda_r0);
    nonneg("lambda_r1", lambda_r1);
    if (variant == Variant::Pebble && (lambda_p != 0.0 || lambda_r0 != 0.0 || lambda_r1 != 0.0))
        errors.push_back({"variant", "pebble requires lambda_p = lambda_r0 = lambda_r1 = 0"});
    if (variant != Variant::Pebble && lambda_p == 0.0 && lambda_r0 == 0.0 && lambda_r1 == 0.0)
        errors.push_back({"variant", "all-zero lambdas describe pebble, not " + to_string(variant)});
    if (grid_n < 2) errors.push_back({"grid_n", "must be >= 2"});
    if (query_length < 2) errors.push_back({"query_length", "must be >= 2"});
    if (queries_per_session == 0) errors.push_back({"queries_per_session", "must be positive"});
    if (query_length > effective_episode_length())
        errors.push_back({"query_length", "exceeds the rollout episode length"});
    if (rollout_episodes == 0) errors.push_back({"rollout_episodes", "must be positive"});
    if (reward_hidden == 0 || reward_hidden_layers == 0) errors.push_back({"reward_hidden", "must be positive"});
    if (recon_dim == 0) errors.push_back({"recon_dim", "must be positive"});
    if (proxy_dim == 0) errors.push_back({"proxy_dim", "must be positive"});
    if (!(reward_lr > 0.0)) errors.push_back({"reward_lr", "must be positive"});
    if (!(recon_lr > 0.0)) errors.push_back({"recon_lr", "must be positive"});
    if (!(proxy_lr > 0.0)) errors.push_back({"proxy_lr", "must be positive"});
    if (epc_episodes < 2) errors.push_back({"epc_episodes", "must be >= 2"});
    if (!(q.epsilon >= 0.0 && q.epsilon <= 1.0)) errors.push_back({"q_epsilon", "must lie in [0, 1]"});
    if (!(q.alpha > 0.0 && q.alpha <= 1.0)) errors.push_back({"q_alpha", "must lie in (0, 1]"});
    if (!(q.gamma >= 0.0 && q.gamma < 1.0)) errors.push_back({"q_gamma", "must lie in [0, 1)"});
    return errors;
}

void ExperimentConfig::validate() const {
    auto errors = check();
    if (!errors.empty()) throw ConfigError(std::move(errors));
}

nlohmann::json to_json(const ExperimentConfig& c) {
    return {{"variant", to_string(c.variant)},
            {"lambda_p", c.lambda_p},
            {"lambda_r0", c.lambda_r0},
            {"lambda_r1", c.lambda_r1},
            {"query_budget", c.query_budget},
            {"queries_per_session", c.queries_per_session},
            {"query_length", c.query_length},
            {"forced_negative", c.forced_negative},
            {"grid_n", c.grid_n},
            {"seed", c.seed},
            {"teacher", to_string(c.teacher)},
            {"reward_hidden", c.reward_hidden},
            {"reward_hidden_layers", c.reward_hidden_layers},
            {"reward_lr", c.reward_lr},
            {"reward_epochs", c.reward_epochs},
            {"recon_dim", c.recon_dim},
            {"recon_lr", c.recon_lr},
            {"recon_epochs", c.recon_epochs},
            {"recon_windows", c.recon_windows},
            {"recon_batch", c.recon_batch},
            {"proxy_dim", c.proxy_dim},
            {"proxy_lr", c.proxy_lr},
            {"proxy_epochs", c.proxy_epochs},
            {"proxy_batch", c.proxy_batch},
            {"rollout_episodes", c.rollout_episodes},
            {"episode_length", c.episode_length},
            {"q_epsilon", c.q.epsilon},
            {"q_alpha", c.q.alpha},
            {"q_gamma", c.q.gamma},
            {"epc_episodes", c.epc_episodes},
            {"epc_length", c.epc_length}};
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError(std::vector<FieldError>{{"", "config must be a JSON object"}});
    ExperimentConfig c;
    const auto known = to_json(c);
    std::vector<FieldError> errors;
    for (const auto& [key, value] : j.items())
        if (!known.contains(key)) errors.push_back({key, "unknown field"});

    const auto read = [&](const char* key, auto& target) {
        if (!j.contains(key)) return;
        try {
            j.at(key).get_to(target);
        } catch (const nlohmann::json::exception&) {
            errors.push_back({key, "has the wrong type"});
        }
    };
    if (j.contains("variant")) {
        try {
            c.set_variant(variant_from_string(j.at("variant").get<std::string>()));
        } catch (const std::exception&) {
            errors.push_back({"variant", "must be one of pebble, oprior, prior"});
        }
    }
    if (j.contains("teacher")) {
        try {
            c.teacher = label_source_from_string(j.at("teacher").get<std::string>());
        } catch (const std::exception&) {
            errors.push_back({"teacher", "must be synthetic or human"});
        }
    }
    read("lambda_p", c.lambda_p);
    read("lambda_r0", c.lambda_r0);
    read("lambda_r1", c.lambda_r1);
    read("query_budget", c.query_budget);
    read("queries_per_session", c.queries_per_session);
    read("query_length", c.query_length);
    read("forced_negative", c.forced_negative);
    read("grid_n", c.grid_n);
    read("seed", c.seed);
    read("reward_hidden", c.reward_hidden);
    read("reward_hidden_layers", c.reward_hidden_layers);
    read("reward_lr", c.reward_lr);
    read("reward_epochs", c.reward_epochs);
    read("recon_dim", c.recon_dim);
    read("recon_lr", c.recon_lr);
    read("recon_epochs", c.recon_epochs);
    read("recon_windows", c.recon_windows);
    read("recon_batch", c.recon_batch);
    read("proxy_dim", c.proxy_dim);
    read("proxy_lr", c.proxy_lr);
    read("proxy_epochs", c.proxy_epochs);
    read("proxy_batch", c.proxy_batch);
    read("rollout_episodes", c.rollout_episodes);
    read("episode_length", c.episode_length);
    read("q_epsilon", c.q.epsilon);
    read("q_alpha", c.q.alpha);
    read("q_gamma", c.q.gamma);
    read("epc_episodes", c.epc_episodes);
    read("epc_length", c.epc_length);
    if (!errors.empty()) throw ConfigError(std::move(errors));
    c.validate();
    return c;
}

std::vector<LabelledQuery> SyntheticTeacher::label(std::size_t, const std::vector<Query>& queries,
                                                   const grid::GridConfig& cfg) {
    std::vector<LabelledQuery> out;
    for (std::size_t i = 0; i < queries.size(); ++i)
        out.push_back({i, oracle_label(queries[i].tau0, queries[i].tau1, cfg).y, now_millis()});
    return out;
}

CombinedLoss combined_loss(const ad::Tensor& rewards0, const ad::Tensor& rewards1, const PreferencePair& pair,
                           const PairPriors& priors, const LossLambdas& lambdas) {
    CombinedLoss out;
    out.total = ce_loss(rewards0, rewards1, pair.y);
    out.ce = out.total.item();
    if (lambdas.proxy != 0.0 && !pair.tie && priors.proxy) {
        const auto lp = proxy_prior_loss(rewards0, rewards1, *priors.proxy);
        out.proxy = lp.item();
        out.total = ad::add(out.total, ad::scale(lp, lambdas.proxy));
    }
    if (lambdas.recon0 != 0.0 && priors.recon0) {
        const auto lr = recon_prior_loss(rewards0, *priors.recon0);
        out.recon0 = lr.item();
        out.total = ad::add(out.total, ad::scale(lr, lambdas.recon0));
    }
    if (lambdas.recon1 != 0.0 && priors.recon1) {
        const auto lr = recon_prior_loss(rewards1, *priors.recon1);
        out.recon1 = lr.item();
        out.total = ad::add(out.total, ad::scale(lr, lambdas.recon1));
    }
    return out;
}

CombinedLoss combined_loss(const PreferencePair& pair, const RewardNet& net, const ReconstructionModel* recon,
                           const ProxyLabeller* proxy, const LossLambdas& lambdas) {
    PairPriors priors;
    if (recon) {
        if (lambdas.recon0 != 0.0) priors.recon0 = attention_weights(*recon, pair.tau0);
        if (lambdas.recon1 != 0.0) priors.recon1 = attention_weights(*recon, pair.tau1);
    }
    if (proxy && lambdas.proxy != 0.0 && !pair.tie) priors.proxy = vanilla_grad(*proxy, pair.tau0, pair.tau1);
    return combined_loss(net.step_rewards(pair.tau0), net.step_rewards(pair.tau1), pair, priors, lambdas);
}

std::string to_string(RunPhase p) {
    switch (p) {
        case RunPhase::Collecting: return "collecting";
        case RunPhase::AwaitingLabels: return "awaiting_labels";
        case RunPhase::Training: return "training";
        case RunPhase::Finished: return "finished";
    }
    return "?";
}

QTable relabel_and_retrain_policy(const RewardTable& rewards, const QConfig& q) {
    QTable fresh(rewards.grid, q);
    fresh.sweep_to_convergence(rewards);
    return fresh;
}

QTable relabel_and_retrain_policy(const RewardNet& net, const QConfig& q) {
    return relabel_and_retrain_policy(reward_table(net), q);
}

RecoveryReport evaluate(const RewardNet& net, const QTable& policy, const ExperimentConfig& cfg) {
    const auto table = reward_table(net);
    RecoveryReport r;
    const auto neg = all_negative_check(table);
    r.all_negative = neg.all_negative;
    r.negativity_fraction = neg.fraction;
    const auto structure = structure_check(table);
    r.spearman_vs_distance = structure.spearman;
    r.spearman_degenerate = structure.degenerate;
    auto rng = nn::make_rng(cfg.seed, "epc");
    try {
        r.epc = epc_distance(table, cfg.epc_episodes, cfg.effective_epc_length(), rng);
    } catch (const std::domain_error&) {
        r.epc.reset();
    }
    const auto reach = goal_reach_check(policy);
    r.goal_reached = reach.reached;
    r.steps_to_goal = reach.steps;
    return r;
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

struct SessionLosses {
    double total = 0.0, ce = 0.0, proxy = 0.0, recon = 0.0;
};

std::string session_tag(std::size_t s) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02zu", s);
    return buf;
}

}  // namespace

RunArtifacts run_experiment(const ExperimentConfig& cfg, LabelProvider* labels, const RunHooks& hooks) {
    cfg.validate();
    SyntheticTeacher synthetic;
    if (cfg.teacher == LabelSource::Human && (labels == nullptr || labels->source() != LabelSource::Human))
        throw std::invalid_argument("human-teacher run started without a label source");
    LabelProvider& provider = labels ? *labels : synthetic;
    const auto phase = [&](RunPhase p) {
        if (hooks.on_phase) hooks.on_phase(p);
    };

    const auto grid = cfg.grid();
    RunArtifacts art;
    art.config = cfg;

    auto reward_init = nn::make_rng(cfg.seed, "reward_init");
    art.reward = std::make_shared<RewardNet>(
        grid,
        RewardNetConfig{cfg.reward_hidden, cfg.reward_hidden_layers,
                        cfg.forced_negative ? RewardMode::ForcedNegative : RewardMode::Standard},
        reward_init);
    RewardNet& net = *art.reward;
    nn::Adam reward_opt(net.parameters(), {.lr = cfg.reward_lr});

    std::optional<ReconstructionModel> recon;
    std::optional<ProxyLabeller> proxy;
    if (cfg.uses_priors()) {
        auto recon_init = nn::make_rng(cfg.seed, "recon_init");
        auto proxy_init = nn::make_rng(cfg.seed, "proxy_init");
        recon.emplace(cfg.prior_view(), grid, ReconstructionConfig{cfg.recon_dim, cfg.query_length - 1}, recon_init);
        proxy.emplace(cfg.prior_view(), grid, ProxyConfig{cfg.proxy_dim}, proxy_init);
        art.prior_models_constructed = true;
    }

    auto rollout_rng = nn::make_rng(cfg.seed, "rollout");
    auto query_rng = nn::make_rng(cfg.seed, "query");
    auto recon_rng = nn::make_rng(cfg.seed, "recon_train");
    auto proxy_rng = nn::make_rng(cfg.seed, "proxy_train");
    const LossLambdas lambdas{cfg.lambda_p, cfg.lambda_r0, cfg.lambda_r1};
    const std::size_t horizon = cfg.effective_episode_length();

    QTable agent(grid, cfg.q);
    RewardTable rewards = reward_table(net);
    std::vector<Trajectory> buffer;
    if (hooks.on_reward_update) hooks.on_reward_update(net);

    art.degenerate = cfg.query_budget == 0;
    std::size_t used = 0;
    for (std::size_t session = 0; used < cfg.query_budget; ++session) {
        phase(RunPhase::Collecting);
        auto episodes = agent.run_episodes(rewards, cfg.rollout_episodes, horizon, rollout_rng);
        buffer.insert(buffer.end(), std::make_move_iterator(episodes.begin()), std::make_move_iterator(episodes.end()));

        const std::size_t count = std::min(cfg.queries_per_session, cfg.query_budget - used);
        auto queries = sample_queries(buffer, count, cfg.query_length, query_rng);
        phase(RunPhase::AwaitingLabels);
        const auto answers = provider.label(session, queries, grid);
        if (answers.size() != queries.size())
            throw std::runtime_error("label source answered " + std::to_string(answers.size()) + " of " +
                                     std::to_string(queries.size()) + " queries");
        for (const auto& a : answers) {
            const auto& q = queries.at(a.query_index);
            art.dataset.append({q.tau0, q.tau1, a.label, a.label.is_tie()}, provider.source(), a.timestamp);
        }
        used += queries.size();
        art.queries.insert(art.queries.end(), queries.begin(), queries.end());
        phase(RunPhase::Training);

        std::vector<PreferencePair> pairs;
        for (auto& e : art.dataset.snapshot()) pairs.push_back(std::move(e.pair));

        std::optional<double> recon_mse, proxy_acc;
        std::vector<PairPriors> priors(pairs.size());
        if (cfg.uses_priors()) {
            std::vector<Trajectory> windows;
            windows.reserve(cfg.recon_windows);
            for (const auto& q : sample_queries(buffer, (cfg.recon_windows + 1) / 2, cfg.query_length, recon_rng)) {
                windows.push_back(q.tau0);
                windows.push_back(q.tau1);
            }
            windows.resize(cfg.recon_windows);
            const auto rr = train_reconstruction(*recon, windows, {cfg.recon_epochs, cfg.recon_lr, cfg.recon_batch},
                                                 recon_rng);
            if (!rr.epoch_losses.empty()) recon_mse = rr.epoch_losses.back();

            const bool trainable = std::any_of(pairs.begin(), pairs.end(), [](const auto& p) { return !p.tie; });
            if (trainable) {
                const auto pr = train_proxy(*proxy, pairs, {cfg.proxy_epochs, cfg.proxy_lr, cfg.proxy_batch}, proxy_rng);
                proxy_acc = pr.accuracy;
            }
            for (std::size_t i = 0; i < pairs.size(); ++i) {
                priors[i].recon0 = attention_weights(*recon, pairs[i].tau0);
                priors[i].recon1 = attention_weights(*recon, pairs[i].tau1);
                if (trainable && !pairs[i].tie) priors[i].proxy = vanilla_grad(*proxy, pairs[i].tau0, pairs[i].tau1);
            }
        }

        std::vector<ad::Tensor> inputs;
        for (const auto& p : pairs) inputs.push_back(ad::concat_rows({net.encode(p.tau0), net.encode(p.tau1)}));
        const double inv = 1.0 / static_cast<double>(pairs.size());
        SessionLosses last;
        for (std::size_t epoch = 0; epoch < cfg.reward_epochs; ++epoch) {
            SessionLosses sums;
            for (std::size_t i = 0; i < pairs.size(); ++i) {
                const auto r = net.forward(inputs[i]);
                const std::size_t t0 = pairs[i].tau0.size();
                const auto parts = combined_loss(ad::slice_rows(r, 0, t0), ad::slice_rows(r, t0, r.rows()), pairs[i],
                                                 priors[i], lambdas);
                sums.total += parts.total.item();
                sums.ce += parts.ce;
                sums.proxy += parts.proxy;
                sums.recon += parts.recon0 + parts.recon1;
                ad::backward(ad::scale(parts.total, inv));
            }
            reward_opt.step();
            last = {sums.total * inv, sums.ce * inv, sums.proxy * inv, sums.recon * inv};
        }
        rewards = reward_table(net);
        if (hooks.on_reward_update) hooks.on_reward_update(net);

        const auto neg = all_negative_check(rewards);
        const auto structure = structure_check(rewards);
        std::optional<double> epc;
        try {
            auto epc_rng = nn::make_rng(cfg.seed, "epc");
            epc = epc_distance(rewards, cfg.epc_episodes, cfg.effective_epc_length(), epc_rng);
        } catch (const std::domain_error&) {
        }
        std::size_t ties = 0;
        for (const auto& p : pairs) ties += p.tie ? 1 : 0;
        nlohmann::json line{{"session", session + 1},
                            {"queries_total", used},
                            {"dataset_size", pairs.size()},
                            {"ties", ties},
                            {"loss_total", last.total},
                            {"loss_ce", last.ce},
                            {"loss_proxy", last.proxy},
                            {"loss_recon", last.recon},
                            {"recon_mse", optional_json(recon_mse)},
                            {"proxy_accuracy", optional_json(proxy_acc)},
                            {"all_negative", neg.all_negative},
                            {"negativity_fraction", neg.fraction},
                            {"spearman", structure.spearman},
                            {"epc", optional_json(epc)}};
        art.metrics.push_back(line);
        if (hooks.on_metrics) hooks.on_metrics(line);

        art.checkpoints.push_back({"reward_session_" + session_tag(session + 1), net.checkpoint()});
        if (recon) art.checkpoints.push_back({"reconstruction_session_" + session_tag(session + 1), recon->checkpoint()});
        if (proxy) art.checkpoints.push_back({"proxy_session_" + session_tag(session + 1), proxy->checkpoint()});
    }

    art.policy = std::make_shared<QTable>(relabel_and_retrain_policy(rewards, cfg.q));
    art.report = evaluate(net, *art.policy, cfg);
    art.checkpoints.push_back({"reward_final", net.checkpoint()});
    nlohmann::json final_line = to_json(art.report);
    final_line["final"] = true;
    final_line["variant"] = to_string(cfg.variant);
    final_line["seed"] = cfg.seed;
    final_line["queries_total"] = used;
    final_line["degenerate_run"] = art.degenerate;
    art.metrics.push_back(final_line);
    if (hooks.on_metrics) hooks.on_metrics(final_line);
    phase(RunPhase::Finished);
    return art;
}

std::string metrics_jsonl(const RunArtifacts& artifacts) {
    std::string out;
    for (const auto& m : artifacts.metrics) out += m.dump() + "\n";
    return out;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

void write_run_outputs(const RunArtifacts& artifacts, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "checkpoints");
    const auto grid = artifacts.config.grid();
    write_file(dir / "metrics.jsonl", metrics_jsonl(artifacts));
    write_file(dir / "preferences.jsonl", artifacts.dataset.to_jsonl(grid));
    write_file(dir / "config.json", to_json(artifacts.config).dump(2) + "\n");
    nlohmann::json report = to_json(artifacts.report);
    report["variant"] = to_string(artifacts.config.variant);
    report["seed"] = artifacts.config.seed;
    write_file(dir / "report.json", report.dump(2) + "\n");
    heatmap_export(reward_table(*artifacts.reward), dir / "heatmap_final.csv");
    for (const auto& c : artifacts.checkpoints) write_file(dir / "checkpoints" / (c.name + ".json"), c.document.dump() + "\n");
}

}  // namespace prior
