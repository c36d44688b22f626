"""Command-line behavior: exit codes, output modes, local backend wiring."""

import json

import pytest
from click.testing import CliRunner

from conftest import manifest_for
from stackd.canonical import canonical_dumps
from stackd.cli import main
from stackd.store import Store


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def data_dir(tmp_path):
    return tmp_path / "data"


def local(runner, data_dir, *args, as_json=True):
    argv = ["--local", str(data_dir)]
    if as_json:
        argv.append("--json")
    return runner.invoke(main, argv + list(args), catch_exceptions=False)


def write_manifest(tmp_path, data_dir, version="1.0.0"):
    store = Store(data_dir)
    manifest = manifest_for(store, version)
    path = tmp_path / f"manifest-{version}.json"
    path.write_text(canonical_dumps(manifest))
    return path


def test_unknown_command_is_usage_error(runner, data_dir):
    result = runner.invoke(main, ["--local", str(data_dir), "bogus"])
    assert result.exit_code == 2
    assert "Usage" in result.stderr or "No such command" in result.stderr


def test_missing_required_option_is_usage_error(runner, data_dir):
    result = local(runner, data_dir, "bundle", "create")
    assert result.exit_code == 2


def test_bundle_create_emits_canonical_json(runner, tmp_path, data_dir):
    manifest = write_manifest(tmp_path, data_dir)
    result = local(runner, data_dir, "bundle", "create", "--manifest", str(manifest))
    assert result.exit_code == 0
    doc = json.loads(result.stdout)
    assert canonical_dumps(doc) == result.stdout.strip()
    assert len(doc["bundle_id"]) == 64

    listed = local(runner, data_dir, "bundle", "list")
    assert json.loads(listed.stdout)[0]["bundle_id"] == doc["bundle_id"]

    human = local(runner, data_dir, "bundle", "resolve", "1.0.0", as_json=False)
    assert human.exit_code == 0
    assert f"bundle_id: {doc['bundle_id']}" in human.stdout


def test_domain_error_exits_1_with_code(runner, data_dir):
    result = local(runner, data_dir, "bundle", "resolve", "9.9.9")
    assert result.exit_code == 1
    assert "error not-found" in result.stderr
    doc = json.loads(result.stdout)
    assert doc["code"] == "not-found"


def test_promote_failure_prints_gate_report(runner, tmp_path, data_dir):
    manifest = write_manifest(tmp_path, data_dir)
    local(runner, data_dir, "bundle", "create", "--manifest", str(manifest))
    request = json.loads(
        local(runner, data_dir, "gate", "request", "--bundle", "1.0.0", "--env", "staging").stdout
    )
    result = local(
        runner, data_dir, "gate", "promote", request["request_id"], as_json=False
    )
    assert result.exit_code == 1
    assert "error gates-not-passed" in result.stderr
    assert "evaluation_pass: false" in result.stdout


def test_blob_round_trip(runner, tmp_path, data_dir):
    source = tmp_path / "artifact.bin"
    source.write_bytes(b"\x00\x01binary payload")
    put = local(runner, data_dir, "blob", "put", str(source))
    assert put.exit_code == 0
    digest = json.loads(put.stdout)["digest"]
    got = local(runner, data_dir, "blob", "get", digest)
    assert got.stdout_bytes == b"\x00\x01binary payload"


def test_health_reports_streams(runner, tmp_path, data_dir):
    manifest = write_manifest(tmp_path, data_dir)
    local(runner, data_dir, "bundle", "create", "--manifest", str(manifest))
    result = local(runner, data_dir, "health")
    doc = json.loads(result.stdout)
    assert doc["status"] == "ok"
    assert doc["streams"]["bundles"] == 1


def test_local_config_file_controls_determinism(runner, tmp_path, data_dir):
    config = tmp_path / "config.json"
    config.write_text(
        canonical_dumps(
            {
                "data_dir": str(data_dir),
                "clock": {"start": "2026-08-15T09:00:00.000Z", "step_ms": 0},
                "rng_seed": 5,
            }
        )
    )
    manifest = write_manifest(tmp_path, data_dir)
    result = runner.invoke(
        main,
        ["--local", str(data_dir), "--config", str(config), "--json",
         "bundle", "create", "--manifest", str(manifest)],
        catch_exceptions=False,
    )
    doc = json.loads(result.stdout)
    assert doc["created_at"] == "2026-08-15T09:00:00.000Z"


def test_bad_config_file_is_domain_error(runner, tmp_path, data_dir):
    config = tmp_path / "config.json"
    config.write_text(canonical_dumps({"detector": {"warn_z": 9, "critical_z": 1}}))
    result = runner.invoke(
        main,
        ["--local", str(data_dir), "--config", str(config), "--json", "health"],
    )
    assert result.exit_code == 1
