from __future__ import annotations

import pytest

from lmsched.config import (
    DEFAULTS,
    ConfigError,
    load_config,
    resolve_resource,
    scheduler_config,
    sim_config,
    workload_params,
)
from lmsched.sched import Policy


def test_defaults_validate():
    cfg = load_config()
    assert cfg == DEFAULTS and cfg is not DEFAULTS
    assert scheduler_config(cfg).policy is Policy.UP
    assert sim_config(cfg).xi == 2.0
    assert workload_params(cfg).beta_schedule[0] == 10.0


def test_file_then_overrides(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("scheduler:\n  alpha: 0.5\nsim:\n  cpu_lanes: 8\n")
    cfg = load_config(p, {"scheduler.alpha": 0.25})
    assert cfg["scheduler"]["alpha"] == 0.25 and cfg["sim"]["cpu_lanes"] == 8


@pytest.mark.parametrize("text", ["scheduler:\n  alpah: 1\n", "scheduler: 3\n", "- a\n", "seed: [1\n"])
def test_bad_files(tmp_path, text):
    p = tmp_path / "c.yaml"
    p.write_text(text)
    with pytest.raises(ConfigError):
        load_config(p)


@pytest.mark.parametrize("key,value", [("scheduler.lam", 0.5), ("workload.malicious_ratio", 2.0),
                                       ("workload.variance", "huge"), ("scheduler.policy", "SJF"),
                                       ("sim.cpu_lanes", 0), ("nope", 1)])
def test_bad_values(key, value):
    with pytest.raises(ConfigError):
        load_config(None, {key: value})


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.yaml")


def test_packaged_resources():
    assert resolve_resource("packaged:demo.yaml").is_file()
    with pytest.raises(ConfigError):
        resolve_resource("packaged:nothing.here")
