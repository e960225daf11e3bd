import pytest

from synthcat.fixtures import build_fixture_catalog, build_fixture_metadata
from synthcat.gateway import LLMGateway, UsageLedger
from synthcat.generator import GenerationContext
from synthcat.mock_provider import MockProvider, RecordingProvider
from synthcat.prompts import PromptTemplates
from synthcat.values import ValueProvider


@pytest.fixture(scope="session")
def templates():
    return PromptTemplates()


@pytest.fixture
def small_catalog():
    return build_fixture_catalog(40)


@pytest.fixture
def make_ctx(templates):
    """Factory for a fresh mock-backed generation context.

    Each call builds isolated gateway/ledger/value-provider state so tests
    never share the diversity registry or usage counters.
    """

    def _make(record_requests=False, max_parallel=4, provider=None):
        inner = provider or MockProvider()
        if record_requests:
            inner = RecordingProvider(inner)
        gateway = LLMGateway(inner, ledger=UsageLedger(), max_parallel=max_parallel)
        value_provider = ValueProvider(gateway, metadata=build_fixture_metadata())
        ctx = GenerationContext(
            gateway=gateway,
            value_provider=value_provider,
            templates=templates,
            max_parallel=max_parallel,
        )
        return ctx, inner

    return _make
