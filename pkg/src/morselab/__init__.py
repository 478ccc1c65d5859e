"""torus-morse-lab: random Čech filtrations and Morse-critical faces on the flat torus."""

__version__ = "0.1.0"
