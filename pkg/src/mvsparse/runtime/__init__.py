"""Orchestration: configuration, wire protocol, simulation loop, distributed
camera/server nodes, reports and the command-line interface."""
