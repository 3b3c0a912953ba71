# test_database.py

import pytest

import database


@pytest.fixture
def ledger(tmp_path):
    database.configure_database(f"sqlite:///{tmp_path / 'runs.db'}")
    database.init_db()
    yield
    database.configure_database(None)


def manifest(run_id, status="completed"):
    return {
        "run_id": run_id,
        "command": "simulate",
        "status": status,
        "config": {"preset": "two-blobs", "mode": "coupled", "nx": 16, "ny": 16, "dt": 1e-3, "t_end": 0.1},
        "started_at": "2026-01-05T10:00:00",
        "finished_at": "2026-01-05T10:01:30",
        "summary": {"steps": 100, "final_time": 0.1, "k_initial": 3.2, "k_final": 2.9, "dist_sq_final": 0.04},
    }


def test_record_and_fetch_run(ledger):
    run_id = database.record_run(manifest("run-1"))
    assert run_id == "run-1"
    run = database.get_run("run-1")
    assert run["status"] == "completed"
    assert run["steps"] == 100
    assert run["k_final"] == pytest.approx(2.9)
    assert run["started_at"] == "2026-01-05T10:00:00"
    assert database.get_run("missing") is None


def test_failed_run_keeps_error_record(ledger):
    failed = manifest("run-2", status="failed")
    failed["error"] = {"kind": "convergence", "step": 7, "message": "stalled"}
    database.record_run(failed)
    assert database.get_run("run-2")["error"]["step"] == 7


def test_list_runs(ledger):
    for i in range(3):
        database.record_run(manifest(f"run-{i}"))
    runs = database.list_runs(limit=2)
    assert len(runs) == 2
    assert {r["id"] for r in database.list_runs()} == {"run-0", "run-1", "run-2"}


def test_disabled_ledger_is_a_no_op(no_ledger):
    assert not database.is_configured()
    assert database.record_run(manifest("run-x")) is None
    assert database.list_runs() == []


def test_duplicate_id_is_logged_not_raised(ledger):
    assert database.record_run(manifest("run-dup")) == "run-dup"
    assert database.record_run(manifest("run-dup")) is None
