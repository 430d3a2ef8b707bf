"""fedkit: federated-averaging orchestration engine and desk-scale simulation
harness for heterogeneous low-resource training nodes."""

__version__ = "0.1.0"
