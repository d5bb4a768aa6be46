"""Confidence-based shared control for bimanual teleoperated suturing.

The stack has three layers: a streaming gesture classifier that names the
operator's current surgeme, a per-axis intent estimator that recovers the
hidden hand target from interaction forces, and a trust engine plus blending
controller that arbitrate robot versus human authority. A deterministic
simulation world, an experiment harness, and a realtime teleoperation service
sit on top.
"""

__version__ = "0.1.0"
