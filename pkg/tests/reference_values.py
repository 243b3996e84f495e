import numpy as np

# Independent model-based values for the published (A, B), Q = I4, R = I2,
# computed with scipy.linalg.solve_discrete_lyapunov / solve_discrete_are.
J_OPEN_LOOP = 5.482660962123099  # Tr P for K = 0
J_STAR = 5.0051568185795725
K_STAR = np.array(
    [
        [0.152104360402, 0.067300448205, 0.108120462979, 0.041768318978],
        [-0.213810596683, -0.068268949268, -0.113996970636, -0.050038023436],
    ]
)
