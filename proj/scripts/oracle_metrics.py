#!/usr/bin/env python3
"""High-precision direct evaluation of the closed-form metric examples.

Independent of the C++ implementation: every value is computed here with
mpmath at 50 digits and frozen into the test suites. Rerun to regenerate.
"""
from mpmath import mp, mpf, exp, log, power

mp.dps = 50


def explog_mean(values, base):
    b = mpf(base)
    return log(sum(power(b, mpf(v)) for v in values) / len(values)) / log(b)


def perplexity(logprobs):
    return exp(-sum(mpf(x) for x in logprobs) / len(logprobs))


def likelihood(ppl, mu=20, k=10):
    return 1 - 1 / (1 + exp(-(mpf(ppl) - mu) / k))


def prompt_exposure(entries, base):
    # entries: list of (severity, p, r)
    b = mpf(base)
    inner = sum(power(b, mpf(s)) * mpf(p) * mpf(r) for s, p, r in entries) / len(entries)
    if inner == 0:
        return mpf(0)
    return max(mpf(0), log(inner) / log(b))


def show(label, value):
    print(f"{label} = {mp.nstr(value, 20)}")


if __name__ == "__main__":
    show("aggregate_cvss([4,8], b=2)", explog_mean([4, 8], 2))
    show("aggregate_cvss([4,8], b=10)", explog_mean([4, 8], 10))
    show("perplexity([-1,-1,-1])", perplexity([-1, -1, -1]))
    show("perplexity([-2.3026,-4.6052])", perplexity([-2.3026, -4.6052]))
    show("likelihood(30)", likelihood(30))
    show("likelihood(10)", likelihood(10))
    show("PE(sev=8,P=1,R=0.5, b=2)", prompt_exposure([(8, 1, 0.5)], 2))
    show("PE(sev=8, PR={1,0}, b=2)", prompt_exposure([(8, 1, 1), (8, 0, 1)], 2))
    show("ME({0,7}, b=2)", explog_mean([0, 7], 2))
