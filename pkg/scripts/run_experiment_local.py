from __future__ import annotations

from pathlib import Path
import sys

ROOT = Path(__file__).resolve().parents[1]   # корень проекта
sys.path.insert(0, str(ROOT / "src"))        # добавляем src в импорт-пути

from mlrd_toolkit.app.schemas import load_config
from mlrd_toolkit.common.logging_utils import setup_logging
from mlrd_toolkit.experiments.montecarlo import run_experiment


def main() -> None:
    config_path = Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "configs" / "clt_white_noise.json"
    setup_logging()

    report = run_experiment(load_config(config_path))
    for comp in report.comparisons:
        print(f"{comp.label}: max_abs={comp.max_abs:.4f} passed={comp.passed}")
    for stat in report.normality:
        print(f"{stat.label}: ks={stat.ks_statistic:.4f} p={stat.p_value:.4f} passed={stat.passed}")
    for check in report.checks:
        print(f"{check.label}: {check.value:.4g} {check.relation} {check.bound:.4g} passed={check.passed}")
    print(f"passed={report.passed} digest={report.digest}")


if __name__ == "__main__":
    main()
