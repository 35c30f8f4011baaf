"""Small hand-built instances shared by the tests."""

from egrl.hwsim import HardwareModel
from egrl.workload import WorkloadGraph


def two_weight_graph(weight=80, act=20):
    """Two nodes, each with one weight tensor and a small activation."""
    layers = [
        {"op": "fc", "weight_size": weight, "ifm": (1, 1, 1), "ofm": (1, 1, act)},
        {"op": "fc", "weight_size": weight, "ifm": (1, 1, act), "ofm": (1, 1, act)},
    ]
    return WorkloadGraph.from_layers("two_weights", layers, [(0, 1)])


def tiny_hw(sram=100, llc=1000, dram=10**6, compute=1e12):
    return HardwareModel.build((dram, llc, sram), (1e9, 1e10, 1e11), compute)


def roomy_hw(compute=1e12):
    """Capacities no synthetic small graph can fill: every placement is valid."""
    return HardwareModel.build((10**12, 10**11, 10**10), (1e9, 1e10, 1e11), compute)
