import pytest

from trainyard.config import PlatformConfig
from trainyard.platform import Platform

MANIFEST = """\
manifest_version: 1
name: resnet-smoke
framework: tensorflow
framework_version: "1.5"
learners: 2
gpus_per_learner: 1
data_store:
  bucket: acme-data
  prefix: in/
  credential: dkey
result_store:
  bucket: acme-results
  prefix: out/
  credential: rkey
checkpoint_interval: 5
total_iterations: 20
learning_rate: "0.001"
"""


def build_platform(tmp_path, seed=1, config=None, subdir="plat"):
    plat = Platform(tmp_path / subdir, config=config or PlatformConfig(), seed=seed)
    plat.add_tenant("tok-acme", "acme")
    plat.add_tenant("tok-rival", "rival")
    plat.add_bucket("acme-data", "acme", "dkey",
                    objects={"in/part0": b"alpha", "in/part1": b"beta"})
    plat.add_bucket("acme-results", "acme", "rkey")
    plat.add_bucket("rival-data", "rival", "xkey", objects={"in/part0": b"zeta"})
    plat.add_bucket("rival-results", "rival", "ykey")
    return plat


@pytest.fixture
def platform(tmp_path):
    return build_platform(tmp_path)


# Verdict lines recorded by tests/test_acceptance.py, echoed after the run
# so they are visible without -s.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
