from .simulate import simulate
from .stage1 import stage1
from .stage2 import stage2
from .report import report
from .cv import cv

commands = [simulate, stage1, stage2, report, cv]

__all__ = ["commands", "simulate", "stage1", "stage2", "report", "cv"]
