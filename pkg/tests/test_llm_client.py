import logging

import pytest

from actionchain.backends import PlanRequest, TokenUsage
from actionchain.backends.llm import LLMBackend
from actionchain.errors import BackendError, ConfigurationError, TransportError
from actionchain.llm_client import ChatClient, EndpointConfig, complete
from actionchain.memory import SharedMemory
from actionchain.prompting import build_context
from actionchain.world import observe

from mock_llm import MockEndpoint, completion

SECRET = "sk-test-do-not-log"


@pytest.fixture(autouse=True)
def credential(monkeypatch):
    monkeypatch.setenv("MOCK_KEY", SECRET)


def cfg(url, **kw):
    base = dict(endpoint_url=url, model="mock-1", credential_env_var="MOCK_KEY", backoff_seconds=0.01)
    return EndpointConfig(**{**base, **kw})


def client(url, sleeps=None, **kw):
    return ChatClient(cfg(url, **kw), sleep=(sleeps.append if sleeps is not None else lambda s: None))


def test_fixed_body_and_usage_pass_through():
    with MockEndpoint([(200, completion("hello there", (1200, 150)))]) as ep:
        done = complete(cfg(ep.url), "sys", "user")
    assert done.text == "hello there"
    assert done.usage == TokenUsage(1200, 150)
    assert done.attempts == 1 and done.latency >= 0
    sent = ep.requests[0]
    assert sent["body"]["model"] == "mock-1" and sent["body"]["temperature"] == 0
    assert [m["role"] for m in sent["body"]["messages"]] == ["system", "user"]
    assert sent["headers"]["Authorization"] == f"Bearer {SECRET}"


def test_two_failures_then_success_backs_off():
    sleeps = []
    with MockEndpoint([(503, "busy"), (500, "oops"), (200, completion("ok"))]) as ep:
        done = client(ep.url, sleeps).complete("s", "u")
    assert done.text == "ok" and done.attempts == 3
    assert sleeps == [0.01, 0.02]
    assert len(ep.requests) == 3


def test_unauthorized_fails_without_retry():
    with MockEndpoint([(401, {"error": "bad key"})]) as ep:
        with pytest.raises(ConfigurationError):
            client(ep.url).complete("s", "u")
    assert len(ep.requests) == 1


def test_persistent_5xx_is_transport_error():
    with MockEndpoint([(502, "x")] * 3) as ep:
        with pytest.raises(TransportError) as info:
            client(ep.url).complete("s", "u")
    assert info.value.attempts == 3 and len(ep.requests) == 3


def test_timeout_is_retried():
    with MockEndpoint([("sleep", 0.5), (200, completion("ok"))]) as ep:
        done = client(ep.url, timeout_seconds=0.1).complete("s", "u")
    assert done.text == "ok" and done.attempts == 2


def test_connection_refused_is_transport_error():
    with MockEndpoint() as ep:
        url = ep.url
    with pytest.raises(TransportError):
        client(url, max_attempts=2).complete("s", "u")


def test_missing_usage_recorded_as_zero(caplog):
    with MockEndpoint([(200, completion("ok", usage=None))]) as ep:
        done = client(ep.url).complete("s", "u")
    assert done.usage == TokenUsage(0, 0)


def test_malformed_payload_is_backend_error():
    with MockEndpoint([(200, {"nothing": "here"})]) as ep:
        with pytest.raises(BackendError):
            client(ep.url).complete("s", "u")


def test_missing_credential_is_configuration_error(monkeypatch):
    monkeypatch.delenv("MOCK_KEY")
    with pytest.raises(ConfigurationError, match="MOCK_KEY"):
        cfg("http://127.0.0.1:9/").credential()


def test_credential_never_logged(caplog):
    with caplog.at_level(logging.DEBUG):
        with MockEndpoint([(500, "x"), (200, completion("ok"))]) as ep:
            client(ep.url).complete("s", "u")
    assert caplog.records and SECRET not in caplog.text


@pytest.mark.parametrize("bad", [{"max_attempts": 4}, {"timeout_seconds": 0}, {"model": ""}])
def test_config_validation(bad):
    with pytest.raises(ConfigurationError):
        cfg("http://x/", **bad)


def test_config_from_mapping_rejects_unknown_keys():
    with pytest.raises(ConfigurationError):
        EndpointConfig.from_mapping({"endpoint_url": "http://x/", "model": "m", "api_key": "no"})


# -- backend on top of the client -------------------------------------------------------


def _request(three_room):
    world, task = three_room
    mem = SharedMemory.for_task(world, task)
    for a in sorted(world.agents):
        mem.update(observe(world, a))
    ctx = build_context(mem, mem.view(), "assignment", [0, 1])
    return PlanRequest("assignment", ctx, (0, 1))


def test_llm_backend_repairs_fenced_output(three_room):
    text = ('Plan:\n```json\n{"reason": "r", "robot_id_task_pairs": ['
            '{"robot_id": "0", "action_chain": ["goto kitchen (3)", "replan",]},'
            '{"robot_id": "1", "action_chain": ["explore"]},],}\n```')
    with MockEndpoint([(200, completion(text, (900, 60)))]) as ep:
        resp = LLMBackend(client(ep.url)).plan(_request(three_room))
    assert [str(a) for a in resp.document.plan_for(0).action_chain] == ["goto kitchen (3)", "replan"]
    assert resp.usage == TokenUsage(900, 60)
    assert resp.prompt and resp.response == text


def test_llm_backend_garbage_keeps_usage(three_room):
    with MockEndpoint([(200, completion("I refuse.", (500, 3)))]) as ep:
        with pytest.raises(BackendError) as info:
            LLMBackend(client(ep.url)).plan(_request(three_room))
    assert info.value.usage == TokenUsage(500, 3)
    assert info.value.response == "I refuse."
