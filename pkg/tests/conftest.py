"""Run micropytest-style tests under pytest.

Provides the ``ctx`` fixture and expands ``@parameterize`` generators.
"""
import inspect

import pytest
from micropytest.core import SkipTest, TestContext


@pytest.fixture
def ctx():
    context = TestContext()
    try:
        yield context
    except SkipTest as exc:
        pytest.skip(str(exc))


def pytest_generate_tests(metafunc):
    generator = getattr(metafunc.function, "_argument_generator", None)
    if generator is None:
        return
    params = [name for name in inspect.signature(metafunc.function).parameters if name != "ctx"]
    values = []
    for args in generator():
        bound = dict(zip(params, args.args))
        bound.update(args.kwargs)
        values.append(tuple(bound[name] for name in params))
    metafunc.parametrize(params, values)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_call(item):
    outcome = yield
    excinfo = outcome.excinfo
    if excinfo is not None and issubclass(excinfo[0], SkipTest):
        outcome.force_exception(pytest.skip.Exception(str(excinfo[1])))
