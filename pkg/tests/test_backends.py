from __future__ import annotations

import os
import random
from decimal import Decimal
from fractions import Fraction

import httpx
import pytest

from codecascade.backends import (
    BackendError,
    ContextOverflowError,
    HttpChatBackend,
    ModelProfile,
    RuleBackend,
    ScriptedBackend,
    complete,
    cost_of,
    estimate_tokens,
    load_scripted_backend,
)
from codecascade.core import TokenUsage


def profile(price_in="0.5", price_out="1.5", window=8192, rank=0, name="m"):
    return ModelProfile(
        name=name,
        price_in=Decimal(price_in),
        price_out=Decimal(price_out),
        context_window=window,
        rank=rank,
    )


class TestEstimateTokens:
    def test_empty(self):
        assert estimate_tokens("") == 0

    def test_eight_bytes(self):
        assert estimate_tokens("abcdefgh") == 2

    def test_rounds_up(self):
        assert estimate_tokens("abc") == 1
        assert estimate_tokens("abcde") == 2

    def test_multibyte_counts_bytes(self):
        assert estimate_tokens("éé") == 1  # 4 utf-8 bytes

    def test_concat_monotone_property(self):
        rng = random.Random(1)
        alphabet = "abc néé 字"
        for _ in range(1000):
            a = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 30)))
            b = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 30)))
            est = estimate_tokens(a + b)
            assert est >= max(estimate_tokens(a), estimate_tokens(b))
            assert est <= estimate_tokens(a) + estimate_tokens(b)


class TestCostOf:
    def test_worked_example(self):
        got = cost_of(TokenUsage(1000, 500), profile())
        assert got == Decimal("0.00125")

    def test_zero(self):
        assert cost_of(TokenUsage(0, 0), profile()) == 0

    def test_against_rational_oracle(self):
        rng = random.Random(99)
        for _ in range(10_000):
            pin = Decimal(rng.randint(0, 10_000)) / 100
            pout = Decimal(rng.randint(0, 10_000)) / 100
            usage = TokenUsage(rng.randint(0, 10**7), rng.randint(0, 10**7))
            p = profile(price_in=str(pin), price_out=str(pout))
            expected = (
                Fraction(usage.prompt_tokens) * Fraction(pin)
                + Fraction(usage.completion_tokens) * Fraction(pout)
            ) / 10**6
            assert Fraction(cost_of(usage, p)) == expected

    def test_additive_over_exchanges(self):
        rng = random.Random(5)
        p = profile(price_in="0.37", price_out="2.11")
        usages = [TokenUsage(rng.randint(0, 9999), rng.randint(0, 9999)) for _ in range(50)]
        total = TokenUsage(0, 0)
        for u in usages:
            total = total + u
        assert cost_of(total, p) == sum(cost_of(u, p) for u in usages)


class TestScriptedBackend:
    def test_replays_verbatim_in_order(self):
        backend = ScriptedBackend(["one", "two", "three"])
        replies = [backend.reply([("user", "x")], "")[0] for _ in range(3)]
        assert replies == ["one", "two", "three"]

    def test_repeats_final_entry_when_exhausted(self):
        backend = ScriptedBackend(["a", "b"])
        replies = [backend.reply([("user", "x")], "")[0] for _ in range(4)]
        assert replies == ["a", "b", "b", "b"]

    def test_two_runs_identical(self):
        script = ["hello TERMINATE"]
        a = ScriptedBackend(script)
        b = ScriptedBackend(script)
        assert a.reply([("user", "hi")], "") == b.reply([("user", "hi")], "")

    def test_rejects_empty_script(self):
        with pytest.raises(ValueError):
            ScriptedBackend([])


class TestComplete:
    def test_scripted_echo_with_estimated_usage(self):
        backend = ScriptedBackend(["hello TERMINATE"])
        exchange = complete(profile(), backend, [("user", "hi there")])
        assert exchange.response_text == "hello TERMINATE"
        assert exchange.usage.prompt_tokens == estimate_tokens("hi there")
        assert exchange.usage.completion_tokens == estimate_tokens("hello TERMINATE")

    def test_context_overflow_boundary(self):
        # window of 10 tokens; a 40-byte prompt estimates to exactly 10
        backend = ScriptedBackend(["x"])
        p = profile(window=10)
        with pytest.raises(ContextOverflowError):
            complete(p, backend, [("user", "a" * 40)])
        # 36 bytes -> 9 tokens: fits
        exchange = complete(p, backend, [("user", "a" * 36)])
        assert exchange.response_text == "x"

    def test_reported_usage_passes_through(self):
        class Reporting:
            def reply(self, messages, system_prompt):
                return "ok", TokenUsage(123, 45)

        exchange = complete(profile(), Reporting(), [("user", "q")])
        assert exchange.usage == TokenUsage(123, 45)


class TestRuleBackend:
    def test_matches_substring_of_latest_prompt(self):
        backend = RuleBackend([("weather", "sunny"), ("stock", "up")], default="dunno")
        assert backend.reply([("user", "what is the weather")], "")[0] == "sunny"
        assert backend.reply([("user", "stock price?")], "")[0] == "up"
        assert backend.reply([("user", "other")], "")[0] == "dunno"

    def test_file_format_rules(self, tmp_path):
        path = tmp_path / "backend.json"
        path.write_text(
            '{"rules": [{"match": "ping", "respond": "pong"}], "default": "eh"}',
            encoding="utf-8",
        )
        backend = load_scripted_backend(path)
        assert backend.reply([("user", "ping me")], "")[0] == "pong"
        assert backend.reply([("user", "nothing")], "")[0] == "eh"

    def test_file_format_script(self, tmp_path):
        path = tmp_path / "backend.json"
        path.write_text('{"script": ["first", "second"]}', encoding="utf-8")
        backend = load_scripted_backend(path)
        assert backend.reply([], "")[0] == "first"
        assert backend.reply([], "")[0] == "second"


class TestHttpBackend:
    def test_retries_transport_failures_then_succeeds(self, monkeypatch):
        backend = HttpChatBackend("http://example.invalid/v1/chat", "m", backoff_base=0.0)
        calls = {"n": 0}

        def fake_post(payload, headers):
            calls["n"] += 1
            if calls["n"] < 3:
                raise httpx.ConnectError("boom")
            return {
                "choices": [{"message": {"content": "hi"}}],
                "usage": {"prompt_tokens": 7, "completion_tokens": 2},
            }

        monkeypatch.setattr(backend, "_post", fake_post)
        text, usage = backend.reply([("user", "q")], "sys")
        assert text == "hi"
        assert usage == TokenUsage(7, 2)
        assert calls["n"] == 3

    def test_gives_up_after_three_attempts(self, monkeypatch):
        backend = HttpChatBackend("http://example.invalid/v1/chat", "m", backoff_base=0.0)
        calls = {"n": 0}

        def fake_post(payload, headers):
            calls["n"] += 1
            raise httpx.ConnectError("down")

        monkeypatch.setattr(backend, "_post", fake_post)
        with pytest.raises(BackendError):
            backend.reply([("user", "q")], "")
        assert calls["n"] == 3

    def test_http_error_is_not_retried(self, monkeypatch):
        backend = HttpChatBackend("http://example.invalid/v1/chat", "m", backoff_base=0.0)
        calls = {"n": 0}

        def fake_post(payload, headers):
            calls["n"] += 1
            raise BackendError("backend returned HTTP 401: nope")

        monkeypatch.setattr(backend, "_post", fake_post)
        with pytest.raises(BackendError):
            backend.reply([("user", "q")], "")
        assert calls["n"] == 1

    def test_malformed_response(self, monkeypatch):
        backend = HttpChatBackend("http://example.invalid/v1/chat", "m", backoff_base=0.0)
        monkeypatch.setattr(backend, "_post", lambda payload, headers: {"weird": True})
        with pytest.raises(BackendError, match="malformed"):
            backend.reply([("user", "q")], "")

    def test_executor_role_mapped_to_user_on_wire(self, monkeypatch):
        backend = HttpChatBackend("http://example.invalid/v1/chat", "m")
        seen = {}

        def fake_post(payload, headers):
            seen["payload"] = payload
            return {"choices": [{"message": {"content": "ok"}}]}

        monkeypatch.setattr(backend, "_post", fake_post)
        backend.reply([("user", "q"), ("assistant", "a"), ("executor", "out")], "sys")
        roles = [m["role"] for m in seen["payload"]["messages"]]
        assert roles == ["system", "user", "assistant", "user"]


@pytest.mark.skipif(
    not (os.environ.get("CODECASCADE_SMOKE_ENDPOINT") and os.environ.get("CODECASCADE_SMOKE_KEY")),
    reason="live smoke test needs CODECASCADE_SMOKE_ENDPOINT and CODECASCADE_SMOKE_KEY",
)
def test_live_service_smoke():
    backend = HttpChatBackend(
        endpoint=os.environ["CODECASCADE_SMOKE_ENDPOINT"],
        model=os.environ.get("CODECASCADE_SMOKE_MODEL", "default"),
        api_key=os.environ["CODECASCADE_SMOKE_KEY"],
    )
    exchange = complete(profile(window=16384), backend, [("user", "Say hello in one word.")])
    assert exchange.response_text
    assert exchange.usage.prompt_tokens > 0
