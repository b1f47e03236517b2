import pytest

from leap.config import load_config, parse_config
from leap.errors import ConfigError

MINIMAL = """\
experiment:
  seeds: [0, 1]
  methods: [leap]
tasks:
  family: quadratic
  count: 3
  dim: 2
  steps: 5
  alpha: 0.5
  full_batch: true
meta:
  steps: 4
  beta: 0.1
heldout:
  count: 2
  eval_steps: 6
"""


def test_minimal_config():
    cfg = parse_config(MINIMAL)
    assert cfg.seeds == [0, 1] and cfg.methods == ["leap"]
    assert len(cfg.distribution) == 3 and cfg.distribution.tasks[0].dim == 2
    assert cfg.meta.meta_steps == 4 and cfg.meta.beta == 0.1
    assert len(cfg.heldout) == 2 and cfg.eval_steps == 6
    assert cfg.distribution.tasks[0].update_rule.alpha == 0.5


def test_heldout_tasks_differ_from_pretraining():
    cfg = parse_config(MINIMAL)
    pre = {t.params.c.tobytes() for t in cfg.distribution.tasks}
    assert not pre & {t.params.c.tobytes() for t in cfg.heldout}


def test_method_step_overrides():
    cfg = parse_config(MINIMAL.replace("  beta: 0.1\n", "  beta: 0.1\n  reptile_step: 0.7\n"))
    assert cfg.meta_for("reptile").beta == 0.7 and cfg.meta_for("leap").beta == 0.1


def _error(text):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    return info.value


def test_unknown_family_names_key_and_line():
    err = _error(MINIMAL.replace("family: quadratic", "family: cubic"))
    assert err.key == "tasks.family" and err.line == 5
    assert "cubic" in str(err) and "line 5" in str(err)


def test_unknown_key_names_key_and_line():
    err = _error(MINIMAL.replace("  beta: 0.1\n", "  beta: 0.1\n  gamma: 3\n"))
    assert err.key == "meta.gamma" and err.line == 14


def test_unknown_section():
    assert _error(MINIMAL + "extra: 1\n").key == "extra"


def test_bad_types_and_values():
    assert _error(MINIMAL.replace("count: 3", "count: three")).key == "tasks.count"
    assert _error(MINIMAL.replace("seeds: [0, 1]", "seeds: []")).key == "experiment.seeds"
    assert _error(MINIMAL.replace("methods: [leap]", "methods: [maml]")).key == "experiment.methods"
    assert _error(MINIMAL.replace("  steps: 4\n", "  steps: 4\n  p: 3\n")).key == "meta.p"
    assert _error(MINIMAL.replace("alpha: 0.5", "alpha: -1")).key == "tasks.alpha"


def test_yaml_syntax_error_has_line():
    assert _error("tasks:\n  family: [quadratic\n").line is not None


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.yaml")


def test_method_steps_under_adam():
    text = MINIMAL.replace("  beta: 0.1\n", "  optimizer: adam\n  adam:\n    lr: 0.05\n  fomaml_lr: 0.2\n")
    cfg = parse_config(text)
    assert cfg.meta_for("leap").adam.lr == 0.05
    assert cfg.meta_for("fomaml").adam.lr == 0.2


def test_shipped_configs_parse():
    from pathlib import Path

    for path in sorted((Path(__file__).parents[1] / "configs").glob("*.yaml")):
        cfg = load_config(path)
        assert cfg.heldout and len(cfg.distribution) > 0
