"""Automated coding of on-screen learning behaviours in screen recordings.

Scenes and actions follow an ICAP-style taxonomy; three coders are provided
(few-shot baseline, a fixed multi-agent workflow and a ReAct tool loop),
plus metrics, a synthetic corpus generator and a command-line front end.
"""

__version__ = "0.1.0"
