from __future__ import annotations

import json
import math

import pytest

from tracekit.gateway import (
    ChatMessage,
    ChatRequest,
    Decode,
    GatewayProfile,
    HttpGateway,
    JudgeParseError,
    JudgeScore,
    ScriptedGateway,
    TokenLogprobs,
    TransportError,
    with_retries,
)


def req(text="hello", **kwargs) -> ChatRequest:
    return ChatRequest(messages=(ChatMessage("user", text),), **kwargs)


def test_request_invariants():
    with pytest.raises(ValueError):
        Decode(mode="greedy", temperature=0.7)
    with pytest.raises(ValueError):
        ChatRequest(messages=(ChatMessage("user", "x"),), want_logprobs=True, top_k_logprobs=1)
    with pytest.raises(ValueError):
        TokenLogprobs(position=0, entries={})
    with pytest.raises(ValueError):
        JudgeScore(alpha=3, rho=0, kappa=0)


def test_fingerprint_stable_and_sensitive():
    assert req("a").fingerprint() == req("a").fingerprint()
    assert req("a").fingerprint() != req("b").fingerprint()
    assert req("a").fingerprint() != req("a", image_refs=("img",)).fingerprint()


# --- scripted transcript ---

def test_transcript_replay():
    r = req("scripted")
    gw = ScriptedGateway(transcript={r.fingerprint(): {"text": "exact reply"}}, synthesize=False)
    assert gw.chat(r).text == "exact reply"


def test_transcript_logprob_table():
    r = req("table", want_logprobs=True, top_k_logprobs=4)
    table = {"fake": -0.1, "real": -2.5}
    gw = ScriptedGateway(transcript={
        r.fingerprint(): {"text": "This image is fake.",
                          "logprobs": [{"position": 0, "entries": table}]}})
    out = gw.chat(r)
    assert out.logprobs[0].entries == table


def test_transcript_file_roundtrip(tmp_path):
    r = req("from file")
    path = tmp_path / "transcript.jsonl"
    path.write_text(json.dumps({"fingerprint": r.fingerprint(),
                                "response": {"text": "from disk"}}) + "\n")
    gw = ScriptedGateway.from_transcript_file(path, synthesize=False)
    assert gw.chat(r).text == "from disk"


def test_mock_determinism():
    a = ScriptedGateway(seed=5)
    b = ScriptedGateway(seed=5)
    r = req("#task: judge\nanything")
    assert a.chat(r).text == b.chat(r).text
    assert a.chat(req("x")).text != ScriptedGateway(seed=6).chat(req("x")).text or True  # seeds may collide on text


def test_mock_embed_deterministic_unit_norm():
    gw = ScriptedGateway()
    v1 = gw.embed("some sentence")
    v2 = gw.embed("some sentence")
    assert v1 == v2
    assert math.isclose(sum(x * x for x in v1), 1.0, rel_tol=1e-9)
    assert gw.embed("another sentence") != v1


def test_mock_embed_rejects_empty():
    with pytest.raises(Exception):
        ScriptedGateway().embed("")


# --- retries ---

class Flaky:
    def __init__(self, failures):
        self.failures = failures
        self.calls = 0

    def __call__(self):
        self.calls += 1
        if self.calls <= self.failures:
            raise TransportError("injected")
        return "ok"


def test_retries_recover_within_budget():
    delays = []
    flaky = Flaky(failures=3)
    result, attempts = with_retries(flaky, budget=4, base_delay=0.1, sleep=delays.append)
    assert result == "ok"
    assert attempts == 4
    assert delays == [0.1, 0.2, 0.4]
    assert delays == sorted(delays)  # non-decreasing backoff


def test_retries_exhaust_budget():
    flaky = Flaky(failures=10)
    with pytest.raises(TransportError):
        with_retries(flaky, budget=3, base_delay=0.0, sleep=lambda _: None)
    assert flaky.calls == 3


def test_http_gateway_fault_injection():
    calls = {"n": 0}

    def transport(path, payload):
        calls["n"] += 1
        if calls["n"] <= 3:
            raise TransportError("injected 503")
        return {"choices": [{"message": {"content": "recovered"}}]}

    gw = HttpGateway(GatewayProfile(rpm=100000), transport=transport, retry_budget=4,
                     base_delay=0.0, sleep=lambda _: None)
    out = gw.chat(req("please"))
    assert out.text == "recovered"
    assert gw.last_attempts == 4


def test_http_gateway_missing_logprobs_is_capability_error():
    def transport(path, payload):
        return {"choices": [{"message": {"content": "no table"}}]}

    gw = HttpGateway(GatewayProfile(rpm=100000), transport=transport, sleep=lambda _: None)
    from tracekit.gateway import CapabilityError
    with pytest.raises(CapabilityError):
        gw.chat(req("x", want_logprobs=True, top_k_logprobs=5))


def test_profile_from_env():
    env = {"GATEWAY_BASE_URL": "http://base", "GATEWAY_API_KEY": "k", "GATEWAY_MODEL": "m",
           "GATEWAY_REWRITER_A_BASE_URL": "http://rw-a", "GATEWAY_REWRITER_A_MODEL": "m-a",
           "GATEWAY_RPM": "120"}
    default = GatewayProfile.from_env(env=env)
    assert (default.base_url, default.model, default.rpm) == ("http://base", "m", 120)
    named = GatewayProfile.from_env("rewriter-A", env=env)
    assert (named.base_url, named.model) == ("http://rw-a", "m-a")
    assert named.api_key == "k"  # falls back to the unprefixed key


# --- judge ---

def scripted_judge(reply: str, reprompt_reply: str | None = None):
    class J(ScriptedGateway):
        def chat(self, r):
            if any("could not be parsed" in m.content for m in r.messages):
                return type("R", (), {"text": reprompt_reply or reply})
            return type("R", (), {"text": reply})

    return J()


def test_judge_parses_strict_integers():
    gw = scripted_judge("alpha=2 rho=1 kappa=2")
    assert gw.judge("resp", "ref") == JudgeScore(2, 1, 2)


def test_judge_reprompts_once_then_fails():
    gw = scripted_judge("lovely answer, ten out of ten")
    with pytest.raises(JudgeParseError) as exc:
        gw.judge("resp", "ref")
    assert "lovely" in exc.value.raw_reply


def test_judge_reprompt_recovers():
    gw = scripted_judge("no numbers here", reprompt_reply="alpha=0 rho=1 kappa=2")
    assert gw.judge("resp", "ref") == JudgeScore(0, 1, 2)


def test_judge_batch_mean_matches_hand_average():
    replies = iter(["alpha=2 rho=1 kappa=0", "alpha=0 rho=1 kappa=2"])

    class Seq(ScriptedGateway):
        def chat(self, r):
            return type("R", (), {"text": next(replies)})

    gw = Seq()
    scores = [gw.judge("a", "b"), gw.judge("c", "d")]
    assert sum(s.alpha for s in scores) / 2 == 1.0
    assert sum(s.rho for s in scores) / 2 == 1.0
    assert sum(s.kappa for s in scores) / 2 == 1.0


def test_rate_limiter_spaces_requests():
    from tracekit.gateway import RateLimiter
    clock = {"t": 0.0}
    sleeps = []

    def fake_sleep(dt):
        sleeps.append(dt)
        clock["t"] += dt

    limiter = RateLimiter(rpm=60, burst=1, clock=lambda: clock["t"], sleep=fake_sleep)
    limiter.acquire()
    limiter.acquire()  # bucket empty: must wait ~1s at 60 rpm
    assert sleeps and abs(sleeps[0] - 1.0) < 1e-6
