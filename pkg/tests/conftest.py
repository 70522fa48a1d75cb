import sys

import pytest

from fewsig import synth


@pytest.fixture(scope="session")
def small_setup():
    """A 12-class planted-keyword corpus shared by episode-level tests."""
    spec = synth.SynthSpec(num_classes=12, docs_per_class=15, doc_length=10,
                           keywords_per_class=3, keyword_rate=0.4,
                           background_vocab_size=80, embedding_dim=12, seed=7)
    return synth.generate(spec)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance criterion lines where capture cannot swallow them."""
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT_LINES", None) if mod else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
