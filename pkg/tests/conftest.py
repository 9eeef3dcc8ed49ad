import torch

# Tiny-tensor workloads: thread-pool handoff costs more than the math.
torch.set_num_threads(1)
