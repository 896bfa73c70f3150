import math

import pytest

import cores


def test_ba_shapes_generation():
    graphs = cores.generate_ba_shapes(10, 12, seed=0)
    assert len(graphs) == 10
    labels = [g.label for g in graphs]
    assert labels.count(0) == 5 and labels.count(1) == 5
    for g in graphs:
        assert g.num_nodes == 17
        assert g.feature_dim == 2
        assert sum(g.motif_mask) == 5


def test_tu_round_trip(tmp_path):
    graphs = cores.generate_ba_shapes(6, 8, seed=3)
    cores.write_tu_dataset(graphs, str(tmp_path), "SMOKE")
    back = cores.parse_tu_dataset(str(tmp_path), "SMOKE")
    assert len(back) == 6
    assert [g.label for g in back] == [g.label for g in graphs]
    assert [g.num_edges for g in back] == [g.num_edges for g in graphs]


def test_split_folds_shapes():
    graphs = cores.generate_ba_shapes(20, 8, seed=1)
    folds = cores.split_folds(graphs, 0.5, 0.3, 0.2, num_folds=2, seed=4)
    assert len(folds) == 2
    for fold in folds:
        ids = set(fold.train) | set(fold.val) | set(fold.test)
        assert len(ids) == 20
        assert len(fold.train) == 10 and len(fold.val) == 6 and len(fold.test) == 4


def test_apply_action_semantics():
    g = cores.Graph()
    g.num_nodes = 3
    g.edges = [(0, 1), (1, 2)]
    g.node_features = [[1.0], [1.0], [1.0]]
    sub = cores.apply_action(g, "node", [0, 1, 0])
    assert list(sub.kept_nodes) == [1, 0, 1]
    assert sum(sub.kept_edges) == 0
    sub_e = cores.apply_action(g, "edge", [1, 0])
    assert sum(sub_e.kept_nodes) == 3
    assert list(sub_e.kept_edges) == [0, 1]


def test_conformal_primitives():
    assert cores.aps_score([0.7, 0.2, 0.1], 0) == pytest.approx(0.7)
    assert cores.aps_score([0.7, 0.2, 0.1], 2) == pytest.approx(1.0)
    q = cores.calibrate([0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9], alpha=0.5)
    assert q == pytest.approx(0.5)
    assert math.isinf(cores.calibrate([0.1] * 5, alpha=0.1))
    assert cores.prediction_set([0.7, 0.2, 0.1], 0.75) == [0]
    assert cores.prediction_set([0.7, 0.2, 0.1], 0.95) == [0, 1]


def test_reward_function():
    assert cores.sparsity_reward(0.5, 0.5) == pytest.approx(0.95)
    assert cores.sparsity_reward(1.0, 0.5) == pytest.approx(0.0)
    rb = cores.compute_reward(
        [0.8, 0.2], 0, 0.5, [0], lambda_=1.0, desired_ratio=0.5, valid=True
    )
    assert rb.case == "certain"
    assert rb.total == pytest.approx(0.8)
    rb2 = cores.compute_reward([0.6, 0.4], 0, 0.5, [0, 1], valid=True)
    assert rb2.case == "uncertain"
    assert rb2.total == pytest.approx(0.3)
    rb3 = cores.compute_reward([0.6, 0.4], 1, 0.5, [0], env_penalty=1.5, valid=False)
    assert rb3.case == "invalid"
    assert rb3.total == pytest.approx(-1.5)


TINY_CONFIG = """
[data]
dataset=ba-shapes
num_folds=1
synthetic_graphs=40
synthetic_base_nodes=8
synthetic_seed=5

[gnn]
architecture=gin
num_layers=1
hidden_dim=8
pooling=mean,add
num_classes=2

[ppo]
ppo_epochs=2
minibatch_size=8
policy_lr=0.001
env_steps=16

[reward]
lambda=0.5
desired_ratio=0.5
alpha_conf=0.2

[train]
classifier_lr=0.01
batch_size=16
max_epochs=3
early_stop_patience=10
ppo_patience=10
seed=0
mode=node
splits=0.5,0.3,0.2
"""


def test_training_loop_smoke(tmp_path):
    out = cores.train(TINY_CONFIG, fold=0, out_dir=str(tmp_path / "run"))
    assert out["epochs_run"] == 3
    assert 0.0 <= out["test"]["accuracy"] <= 1.0
    assert (tmp_path / "run" / "metrics.csv").exists()
    assert (tmp_path / "run" / "summary.json").exists()
    assert (tmp_path / "run" / "classifier.ckpt").exists()
    assert (tmp_path / "run" / "policy.ckpt").exists()


def test_vanilla_training_smoke():
    out = cores.train(TINY_CONFIG, fold=0, vanilla=True)
    assert out["epochs_run"] == 3
    history = out["history"]
    assert len(history) == 9  # three splits per epoch
    assert {row["split"] for row in history} == {"train", "val", "test"}
