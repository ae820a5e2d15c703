"""Executable semantics and explicit-state model checker for OSEK/VDX-style RTOS applications.

The package is organized in layers:

* ``oil_config``   parses and validates the static system configuration.
* ``task_lang``    parses task bodies written in a small C-like statement language.
* ``model``        defines the immutable kernel state and its canonical snapshot.
* ``kernel_core``  implements task, event and resource services plus scheduling.
* ``timing``       implements the system counter, alarms and time intervals.
* ``explorer``     drives single steps, traces and reachability graphs.
* ``ltl``          translates LTL formulas to Buchi automata and model-checks graphs.
* ``conformance``  evaluates the standard property catalog and adjudicates verdicts.
* ``cli``          command line front end.
"""

__version__ = "0.1.0"
