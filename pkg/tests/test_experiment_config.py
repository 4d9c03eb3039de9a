import pytest

from controllers.experiment_controller import ExperimentConfig, ExperimentController
from utils.errors import ConfigError, DomainError

BASE = {
    "command": "solve-hitchin",
    "domain": {"nx": 16, "ny": 16, "x_period": 1.0, "y_min": 0.5, "y_max": 1.5},
    "fields": {"phi1": "1", "boundary_u": "log(2*y)"},
}


def make_config(tmp_path, **overrides):
    data = {**BASE, **overrides}
    return ExperimentConfig.from_dict(data, base_path=tmp_path / "run.jsonc")


def test_cli_values_take_precedence(tmp_path):
    config = ExperimentConfig.from_dict({**BASE, "seed": 3}, "make-slice", tmp_path / "o", 11,
                                        base_path=tmp_path / "run.jsonc")
    assert config.command == "make-slice"
    assert config.seed == 11
    assert config.output_dir == tmp_path / "o"
    assert config.domain.nx == 16


def test_missing_domain_key(tmp_path):
    with pytest.raises(ConfigError) as info:
        make_config(tmp_path, domain={"nx": 16, "ny": 16, "y_min": 0.5})
    assert info.value.kind == "missing_key"


def test_invalid_domain_is_domain_error(tmp_path):
    with pytest.raises(DomainError):
        make_config(tmp_path, domain={"nx": 16, "ny": 16, "y_min": 1.5, "y_max": 0.5})


def test_missing_field_file_names_path(tmp_path):
    with pytest.raises(ConfigError) as info:
        make_config(tmp_path, fields={"phi1": "1", "u": {"file": "absent.csv"}})
    assert info.value.kind == "missing_file"
    assert info.value.details["path"].endswith("absent.csv")


def test_unknown_field_name(tmp_path):
    with pytest.raises(ConfigError) as info:
        make_config(tmp_path, fields={"phi4": "1"})
    assert info.value.kind == "unknown_field"


@pytest.mark.parametrize("key, values", [
    ("family", {"r_values": [10.0, 1.0]}),
    ("wkb", {"eps_values": [0.1, 0.2]}),
    ("secondary", {"r_values": []}),
])
def test_sweep_lists_must_be_monotone(tmp_path, key, values):
    with pytest.raises(ConfigError) as info:
        make_config(tmp_path, **{key: values})
    assert info.value.kind == "sweep_list"


@pytest.mark.parametrize("seed", [True, 1.5, "7"])
def test_seed_must_be_integer(tmp_path, seed):
    with pytest.raises(ConfigError) as info:
        make_config(tmp_path, seed=seed)
    assert info.value.kind == "seed"


def test_apply_defaults_fills_and_checks(tmp_path):
    config = make_config(tmp_path, solver={"max_iter": 7})
    definitions = [
        {'name': 'solver.tol', 'type': 'float', 'default': 1e-10, 'range': (0.0, None)},
        {'name': 'solver.max_iter', 'type': 'int', 'default': 50, 'range': (1, 10)},
        {'name': 'slice.phi3_mode', 'type': 'choice', 'default': 'dbar', 'choices': ('dbar', 'nilpotent')},
    ]
    config.apply_defaults(definitions)
    assert config.get("solver.tol") == 1e-10
    assert config.get("solver.max_iter") == 7
    assert config.get("slice.phi3_mode") == "dbar"

    config.settings.set_setting("solver.max_iter", 11)
    with pytest.raises(ConfigError) as info:
        config.apply_defaults(definitions)
    assert info.value.kind == "range"

    config.settings.set_setting("solver.max_iter", True)
    with pytest.raises(ConfigError) as info:
        config.apply_defaults(definitions)
    assert info.value.kind == "type"

    config.settings.set_setting("solver.max_iter", 5)
    config.settings.set_setting("slice.phi3_mode", "exact")
    with pytest.raises(ConfigError) as info:
        config.apply_defaults(definitions)
    assert info.value.kind == "choice"


def test_controller_lists_commands(project_root):
    controller = ExperimentController(project_root)
    assert set(controller.available_commands()) == {
        "closedness", "contradiction", "family", "holonomy", "make-slice", "secondary", "solve-hitchin", "wkb-sweep"}
    with pytest.raises(ConfigError) as info:
        controller.resolve_plugin("no-such-command")
    assert info.value.kind == "unknown_command"


@pytest.mark.parametrize("name, command", [("solve_hitchin", "solve-hitchin"), ("closedness", "closedness")])
def test_sample_config_files_parse(project_root, name, command):
    config = ExperimentConfig.from_file(project_root / "configs" / "samples" / f"{name}.jsonc")
    assert config.command == command
    assert config.config_path.name == f"{name}.jsonc"
