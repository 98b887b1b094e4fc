"""Desk-scale object-goal navigation: semantic gridworld, scripted
demonstrations, structured QA annotation, linear policies, and evaluation."""

__version__ = "0.1.0"
