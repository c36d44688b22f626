"""Governance control plane for model deployments.

Content-addressed bundles, evidence-backed controls, a tamper-evident
decision log, drift and telemetry monitoring, gated promotion, and
incident escalation, exposed through one service facade with HTTP and
CLI front ends that replay identically.
"""
