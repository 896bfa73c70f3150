#include <doctest.h>

#include <map>

#include "cores/config.hpp"

using namespace cores;

namespace {

const char* kSample = R"(
[data]
dataset=MUTAG
data_dir=data
num_folds=5

[gnn]
architecture=gin
num_layers=3
hidden_dim=16
dropout=0.0
batch_norm=true
pooling=mean,add
gin_epsilon=0.2
gin_epsilon_trainable=true
num_classes=2

[ppo]
clip_epsilon=0.2
entropy_coef=0.001
value_coef=1.0
ppo_epochs=15
minibatch_size=32
policy_lr=0.0003
critic_lr_ratio=3.0
advantage_normalization=true
env_steps=128

[reward]
lambda=0.1
desired_ratio=0.7
env_penalty=0.5
alpha_conf=0.2

[train]
classifier_lr=0.001
classifier_scheduler_factor=0.95
rl_scheduler_factor=0.9
batch_size=16
max_epochs=200
early_stop_patience=50
ppo_patience=10
seed=0
mode=node
splits=0.4,0.5,0.1
)";

}  // namespace

TEST_CASE("config parse picks up every section") {
    FullConfig cfg = FullConfig::parse_text(kSample);
    CHECK(cfg.data.dataset == "MUTAG");
    CHECK(cfg.train.gnn.num_layers == 3);
    CHECK(cfg.train.gnn.hidden_dim == 16);
    CHECK(cfg.train.gnn.pool_mean);
    CHECK(cfg.train.gnn.pool_add);
    CHECK(cfg.train.gnn.gin_epsilon == doctest::Approx(0.2));
    CHECK(cfg.train.ppo.ppo_epochs == 15);
    CHECK(cfg.train.ppo.critic_lr_ratio == doctest::Approx(3.0));
    CHECK(cfg.train.reward.desired_ratio == doctest::Approx(0.7));
    CHECK(cfg.train.classifier_lr == doctest::Approx(0.001));
    CHECK(cfg.train.mode == RemovalMode::kNode);
    CHECK(cfg.train.splits[1] == doctest::Approx(0.5));
    cfg.train.validate();
}

TEST_CASE("serialize-parse round trip is idempotent") {
    FullConfig cfg = FullConfig::parse_text(kSample);
    const std::string once = cfg.serialize();
    FullConfig back = FullConfig::parse_text(once);
    const std::string twice = back.serialize();
    CHECK(once == twice);
}

TEST_CASE("unknown sections and keys are rejected") {
    CHECK_THROWS_WITH_AS(FullConfig::parse_text("[bogus]\nx=1\n"),
                         doctest::Contains("unknown section"), ValueError);
    CHECK_THROWS_WITH_AS(FullConfig::parse_text("[gnn]\nlayersss=3\n"),
                         doctest::Contains("layersss"), ValueError);
    CHECK_THROWS_AS(FullConfig::parse_text("[gnn]\nnum_layers\n"), ValueError);
    CHECK_THROWS_AS(FullConfig::parse_text("orphan=1\n"), ValueError);
}

TEST_CASE("every tuning knob name maps to exactly one config key") {
    // Canonical knob vocabulary: human name -> config fragment.
    const std::map<std::string, std::string> knobs = {
        {"Split sizes", "[train]\nsplits=0.4,0.5,0.1"},
        {"Batch size", "[train]\nbatch_size=16"},
        {"Dropout rate", "[gnn]\ndropout=0.1"},
        {"Batch normalizing", "[gnn]\nbatch_norm=true"},
        {"Dimension of hidden layers", "[gnn]\nhidden_dim=64"},
        {"Number of GNN layers", "[gnn]\nnum_layers=3"},
        {"Global pooling type", "[gnn]\npooling=mean,add"},
        {"Classifier scheduler factor", "[train]\nclassifier_scheduler_factor=0.95"},
        {"Classifier learning rate", "[train]\nclassifier_lr=0.001"},
        {"Epsilon", "[gnn]\ngin_epsilon=0.2"},
        {"Trainable epsilon", "[gnn]\ngin_epsilon_trainable=true"},
        {"Early stopping clf. patience", "[train]\nearly_stop_patience=500"},
        {"Early stopping PPO patience", "[train]\nppo_patience=10"},
        {"Number of environment steps", "[ppo]\nenv_steps=128"},
        {"Number of PPO epochs", "[ppo]\nppo_epochs=15"},
        {"Environment penalty size", "[reward]\nenv_penalty=0.5"},
        {"RL scheduler factor", "[train]\nrl_scheduler_factor=0.9"},
        {"Ratio of the critic learning rate", "[ppo]\ncritic_lr_ratio=3.0"},
        {"PPO entropy coefficient", "[ppo]\nentropy_coef=0.001"},
        {"PPO MSE coefficient", "[ppo]\nvalue_coef=1.0"},
        {"PPO clip value", "[ppo]\nclip_epsilon=0.2"},
        {"Conformal error rate", "[reward]\nalpha_conf=0.2"},
        {"Maximum desired ratio d", "[reward]\ndesired_ratio=0.7"},
        {"Reward weight lambda", "[reward]\nlambda=0.1"},
    };
    for (const auto& [name, fragment] : knobs) {
        CAPTURE(name);
        CHECK_NOTHROW(FullConfig::parse_text(fragment));
    }
}

TEST_CASE("lr ordering guard") {
    FullConfig cfg = FullConfig::parse_text(kSample);
    cfg.train.ppo.policy_lr = 0.01;  // above classifier_lr = 0.001
    CHECK_THROWS_AS(cfg.train.validate(), ValueError);
    cfg.train.override_lr_order = true;
    CHECK_NOTHROW(cfg.train.validate());
}
