"""Three-party detectable broadcast from anti-correlated qutrit keys.

Modules: ``qutrit_core`` (states and measurement), ``keysource`` (dealing
and the sample test), ``protocol`` (honest state machines), ``adversary``
(Byzantine strategies), ``harness`` (campaigns and replay), ``modelcheck``
(exhaustive enumeration) and ``cli``.
"""
from .protocol import ConfigError, Outcome, PlayerId, ProtocolConfig, Verdict, run_protocol

__version__ = "0.1.0"

__all__ = ["ConfigError", "Outcome", "PlayerId", "ProtocolConfig", "Verdict", "run_protocol", "__version__"]
