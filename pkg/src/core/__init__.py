"""
Core algorithms for BCMInfer.

- Bounded-confidence simulators (BCM-b/S/I/U/G)
- Relaxed probabilistic model and its log joint
- Reverse-mode autodiff over numpy arrays
- SVI, HMC and rejection ABC
- Scoring and the experiment grid runner
"""
