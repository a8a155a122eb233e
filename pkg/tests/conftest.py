import re

from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")

# one-line verdict per acceptance criterion, printed in the terminal summary
CRITERIA = {
    1: "conjugate covariate model vs quadrature/grid oracles",
    2: "G-Wishart draws valid; MC constants match closed forms",
    3: "pseudo-likelihood identities vs Schur-complement oracles",
    4: "3-node benchmark: edge probabilities and partial-corr MSE",
    5: "5-node chain benchmark: partial-corr MSE under constant graph",
    6: "two-cluster benchmark: partition and edge recovery (pseudo)",
    7: "DIC ordering: full model preferred on benchmarks 1 and 3",
    8: "sampler joint correctness (prior-reproduction KS)",
    9: "CLI pipelines byte-identical under fixed seed",
}

_results = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    num = int(m.group(1))
    if report.passed:
        _results[num] = "PASS"
    elif report.failed:
        _results[num] = "FAIL"
    else:
        _results[num] = "SKIP"


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(CRITERIA):
        verdict = _results.get(num, "NOT RUN")
        terminalreporter.write_line(f"criterion {num}: {verdict} - {CRITERIA[num]}")
