#pragma once

#include "troughcal/diagnostics.hpp"
#include "troughcal/grad_engine.hpp"
#include "troughcal/params.hpp"
#include "troughcal/sequence.hpp"
#include "troughcal/topology.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace troughcal {

/// Step sizes per parameter block, applied to the raw coordinates
/// (a, b, log_alpha, omega, softplus pre-image of h_pg).
struct LearningRates {
    double scale = 1e-9;
    double bias = 3e-4;
    double alpha = 3e-5;
    double omega = 2e-4;
    double hpg = 0.35; ///< per-sequence step; see fit()

    double of(ParamBlock block) const noexcept;
};

enum class Optimizer { Sgd, Momentum };

struct TrainConfig {
    LearningRates learning_rates;
    std::size_t epochs = 200;
    std::size_t batch_size = 8;
    Optimizer optimizer = Optimizer::Momentum;
    double momentum = 0.9;
    std::uint64_t seed = 0;
    std::size_t patience = 0;       ///< epochs without improvement before stopping; 0 disables
    double min_delta = 0.0;         ///< relative improvement that resets patience
    /// Global gradient norm cap; <= 0 disables. The raw a-gradient alone is
    /// O(1e4) early in training because a multiplies T_mu.
    double clip_norm = 1e4;
    std::size_t checkpoint_interval = 64;
    std::size_t threads = 1;
    double h_pg_init = 1.0;
    bool create_hpg_blocks = true;
    std::array<bool, 5> frozen{};   ///< indexed like kAllParamBlocks
    std::vector<double> sensor_weights;
    double flag_k = 3.0;
    /// h_pg stays at its initial value for this many epochs so that the flow
    /// split settles first; otherwise early beta errors drive spans into the
    /// flat region of the softplus where they stall.
    std::size_t hpg_warmup_epochs = 60;

    /// Throws ConfigError unless rates are positive and batch_size >= 1.
    void validate() const;
    EvalOptions eval_options() const;
};

TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& config);

/// Mapping of raw era labels to a contiguous index space.
struct EraRegistry {
    std::vector<int> raw_ids;                      ///< sorted; compact id = position
    std::map<std::string, int> sequence_era;       ///< sequence id -> compact id
    std::map<std::string, std::vector<int>> eras_by_subfield; ///< compact ids

    int compact(int raw) const;
    std::size_t omega_block_count() const noexcept;
};

/// Fails with OverlappingEras when two eras of one subfield overlap in time.
EraRegistry era_registry(std::span<const HomogenizationSequence> sequences);
nlohmann::json era_registry_to_json(const EraRegistry& registry);
EraRegistry era_registry_from_json(const nlohmann::json& j);

/// Everything needed to continue training exactly where it stopped.
struct TrainerState {
    ParamSet params;
    std::vector<double> velocity;
    std::size_t epoch = 0;          ///< completed epochs
    std::string rng_state;
    double best_loss = 0.0;
    std::size_t since_best = 0;
    bool stopped_early = false;
    std::vector<double> loss_curve;
    std::size_t clip_events = 0;
};

nlohmann::json trainer_state_to_json(const TrainerState& state);
TrainerState trainer_state_from_json(const nlohmann::json& j);

struct FitOptions {
    std::optional<ParamSet> init;
    std::optional<TrainerState> resume;
    std::function<void(const std::string&)> log;
    /// Called after each epoch; returning false stops training (state is resumable).
    std::function<bool(const TrainerState&)> on_epoch;
    bool build_report = true;
};

struct FitResult {
    ParamSet params;
    FitReport report;
    TrainerState state;
    EraRegistry eras;
};

FitResult fit(std::span<const HomogenizationSequence> sequences, const FieldModel& field,
              const TrainConfig& config, const FitOptions& options = {});

struct SelfConsistency {
    std::vector<ConsistencyScore> per_era;
    double mean_r_squared = 0.0;   ///< average over eras
    double pooled_r_squared = 0.0; ///< all eras stacked into one regression
    std::vector<BetaEntry> beta_a;
    std::vector<BetaEntry> beta_b;
};

/// Fits omega separately on A and on B, every other block frozen at `prior`
/// (h_pg of unseen periods falls back to the prior's period mean), and
/// regresses era-mean beta of B on that of A.
SelfConsistency self_consistency(std::span<const HomogenizationSequence> a,
                                 std::span<const HomogenizationSequence> b, const FieldModel& field,
                                 const TrainConfig& config, const ParamSet& prior);

/// Checkpoint file content: field model, train config, trainer state, eras.
nlohmann::json checkpoint_to_json(const FieldModel& field, const TrainConfig& config,
                                  const TrainerState& state, const EraRegistry& eras);

struct Checkpoint {
    FieldModel field;
    TrainConfig config;
    TrainerState state;
    EraRegistry eras;
};

Checkpoint checkpoint_from_json(const nlohmann::json& j);
void write_checkpoint(const std::string& path, const nlohmann::json& checkpoint);
Checkpoint read_checkpoint(const std::string& path);

} // namespace troughcal
