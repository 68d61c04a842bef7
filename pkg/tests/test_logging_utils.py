import logging

from mlrd_toolkit.common.logging_utils import get_run_id, log_duration, run_id_scope, set_run_id


def test_run_id_scope_restores_previous():
    set_run_id("outer")
    with run_id_scope("abc123") as rid:
        assert rid == "abc123"
        assert get_run_id() == "abc123"
    assert get_run_id() == "outer"
    with run_id_scope(None):
        assert get_run_id() == "-"


def test_log_duration_writes_fields(caplog):
    log = logging.getLogger("tests.timing")
    with caplog.at_level(logging.INFO, logger="tests.timing"):
        with log_duration(log, "stage_done", stage="prepare") as fields:
            fields["passed"] = True
    assert fields["duration_ms"] >= 0.0
    message = caplog.records[-1].getMessage()
    assert message.startswith("stage_done stage=prepare passed=True duration_ms=")


def test_log_duration_logs_on_error(caplog):
    log = logging.getLogger("tests.timing")
    with caplog.at_level(logging.INFO, logger="tests.timing"):
        try:
            with log_duration(log, "selftest", name="boom"):
                raise RuntimeError("boom")
        except RuntimeError:
            pass
    assert "selftest name=boom duration_ms=" in caplog.records[-1].getMessage()
