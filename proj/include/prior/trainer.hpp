#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "prior/evaluation.hpp"
#include "prior/proxy_prior.hpp"
#include "prior/q_learning.hpp"
#include "prior/reconstruction_prior.hpp"
#include "prior/reward_model.hpp"
#include "prior/teacher.hpp"

namespace prior {

enum class Variant { Pebble, OPrior, Prior };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct FieldError {
    std::string field;
    std::string message;
};

class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(std::vector<FieldError> errors);
    const std::vector<FieldError>& errors() const { return errors_; }

private:
    std::vector<FieldError> errors_;
};

struct ExperimentConfig {
    Variant variant = Variant::Prior;
    double lambda_p = 1.0;
    double lambda_r0 = 0.5;
    double lambda_r1 = 0.5;
    std::size_t query_budget = 40;
    std::size_t queries_per_session = 8;
    std::size_t query_length = 8;
    bool forced_negative = false;
    int grid_n = 8;
    std::uint64_t seed = 0;
    LabelSource teacher = LabelSource::Synthetic;

    std::size_t reward_hidden = 64;
    std::size_t reward_hidden_layers = 2;
    double reward_lr = 1e-4;
    std::size_t reward_epochs = 100;

    std::size_t recon_dim = 32;
    double recon_lr = 1e-3;
    std::size_t recon_epochs = 50;
    std::size_t recon_windows = 128;
    std::size_t recon_batch = 16;

    std::size_t proxy_dim = 32;
    double proxy_lr = 1e-3;
    std::size_t proxy_epochs = 50;
    std::size_t proxy_batch = 8;

    std::size_t rollout_episodes = 500;
    std::size_t episode_length = 0;  // 0 means 4(n - 1)
    QConfig q;

    std::size_t epc_episodes = 200;
    std::size_t epc_length = 0;  // 0 means 2(n - 1)

    // Resets the prior coefficients to the variant's defaults (all zero for PEBBLE).
    void set_variant(Variant v);
    bool uses_priors() const { return variant != Variant::Pebble; }
    StateView prior_view() const { return variant == Variant::OPrior ? StateView::Observations : StateView::Symbols; }
    grid::GridConfig grid() const { return grid::GridConfig::square(grid_n); }
    std::size_t effective_episode_length() const;
    std::size_t effective_epc_length() const;
    std::size_t sessions() const;

    std::vector<FieldError> check() const;
    // Throws ConfigError listing every invalid field.
    void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
// Unknown keys are rejected; absent keys keep their defaults. Absent lambdas follow the variant.
ExperimentConfig config_from_json(const nlohmann::json& j);

struct LabelledQuery {
    std::size_t query_index = 0;
    Label label;
    std::int64_t timestamp = 0;
};

class LabelProvider {
public:
    virtual ~LabelProvider() = default;
    virtual LabelSource source() const = 0;
    // Blocks until the whole session is labelled. Results are in arrival order.
    virtual std::vector<LabelledQuery> label(std::size_t session, const std::vector<Query>& queries,
                                             const grid::GridConfig& cfg) = 0;
};

class SyntheticTeacher final : public LabelProvider {
public:
    LabelSource source() const override { return LabelSource::Synthetic; }
    std::vector<LabelledQuery> label(std::size_t session, const std::vector<Query>& queries,
                                     const grid::GridConfig& cfg) override;
};

struct LossLambdas {
    double proxy = 0.0;
    double recon0 = 0.0;
    double recon1 = 0.0;
};

// Priors for one pair, computed once per feedback session and held constant during reward updates.
struct PairPriors {
    std::optional<PriorWeights> recon0;
    std::optional<PriorWeights> recon1;
    std::optional<SignedStepImportance> proxy;
};

struct CombinedLoss {
    ad::Tensor total;
    double ce = 0.0;
    double proxy = 0.0;
    double recon0 = 0.0;
    double recon1 = 0.0;
};

// L_CE + lambda_p L_p + lambda_r0 L_r(tau0) + lambda_r1 L_r(tau1); zero-weight terms are not built.
// The proxy term is skipped for tie pairs.
CombinedLoss combined_loss(const ad::Tensor& rewards0, const ad::Tensor& rewards1, const PreferencePair& pair,
                           const PairPriors& priors, const LossLambdas& lambdas);
CombinedLoss combined_loss(const PreferencePair& pair, const RewardNet& net, const ReconstructionModel* recon,
                           const ProxyLabeller* proxy, const LossLambdas& lambdas);

enum class RunPhase { Collecting, AwaitingLabels, Training, Finished };
std::string to_string(RunPhase p);

struct RunHooks {
    std::function<void(RunPhase)> on_phase;
    std::function<void(const nlohmann::json&)> on_metrics;
    std::function<void(const RewardNet&)> on_reward_update;
};

struct NamedCheckpoint {
    std::string name;
    nlohmann::json document;
};

struct RunArtifacts {
    ExperimentConfig config;
    std::shared_ptr<RewardNet> reward;
    std::shared_ptr<QTable> policy;
    std::vector<nlohmann::json> metrics;
    PreferenceDataset dataset;
    std::vector<Query> queries;
    std::vector<NamedCheckpoint> checkpoints;
    RecoveryReport report;
    bool degenerate = false;
    bool prior_models_constructed = false;
};

RunArtifacts run_experiment(const ExperimentConfig& cfg, LabelProvider* labels = nullptr, const RunHooks& hooks = {});

// Fresh Q-table converged on the learned reward.
QTable relabel_and_retrain_policy(const RewardNet& net, const QConfig& q);
QTable relabel_and_retrain_policy(const RewardTable& rewards, const QConfig& q);

RecoveryReport evaluate(const RewardNet& net, const QTable& policy, const ExperimentConfig& cfg);

std::string metrics_jsonl(const RunArtifacts& artifacts);
// Writes metrics.jsonl, preferences.jsonl, report.json, heatmap_final.csv and checkpoints/.
void write_run_outputs(const RunArtifacts& artifacts, const std::filesystem::path& dir);

}  // namespace prior
