from fractions import Fraction

import pytest

from securetime import crypto
from securetime.clock import NetParams, SimClock
from securetime.receiver import Receiver
from securetime.sender import Sender

MS = 1_000_000
US = 1_000


def kp(scheme="test", n=1):
    return crypto.generate_keypair(scheme, bytes([n]) * 32)


@pytest.fixture
def net():
    return NetParams(0, 1 * MS, Fraction(100, 10**6))


class Pair:
    """A sender and one receiver wired by hand, no simulator in between."""

    def __init__(self, net, mode="1-step", scheme="test", clock=None, **rx):
        self.net = net
        self.lt = kp(scheme, 1)
        self.sender = Sender(self.lt, net, scheme=scheme, mode=mode)
        self.rk = kp(scheme, 2)
        self.receiver = Receiver(self.lt.public, net, self.rk, clock or SimClock(), scheme=scheme, **rx)
        self.sender.register_receiver(self.receiver.receiver_id, self.rk.public)

    def announce(self, rng):
        from securetime import wire
        data = wire.encode(self.sender.start_session(rng))
        return data, self.receiver.handle_session_announce(data)

    def measure(self, t1, a, b, sender_offset=0):
        """Run one delay measurement: request delay ``a``, response delay ``b``.
        ``sender_offset`` is receiver-local minus sender time during the exchange."""
        from securetime import wire
        d = self.receiver.tick(t1)
        assert d.verdict == "sent"
        t2 = t1 - sender_offset + a
        resp = self.sender.handle_delay_request(d.outgoing, t2)
        t4 = t2 + b + sender_offset
        return self.receiver.handle(wire.encode(resp), t4)


@pytest.fixture
def pair(net):
    return Pair(net)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
