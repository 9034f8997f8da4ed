"""Published reference values used by the reproduction tests (printed precision)."""

# equicorrelated cube probabilities P(-a <= Z_j <= a): (d, a, rho) -> printed value
RECT_PROBS = {
    (5, 1, 0.3): 0.176, (5, 1, 0.6): 0.266, (5, 1, 0.8): 0.391,
    (5, 2, 0.3): 0.808, (5, 2, 0.6): 0.847, (5, 2, 0.8): 0.883,
    (5, 4, 0.3): 1.000, (5, 4, 0.6): 1.000, (5, 4, 0.8): 1.000,
    (10, 1, 0.3): 0.038, (10, 1, 0.6): 0.110, (10, 1, 0.8): 0.267,
    (10, 2, 0.3): 0.674, (10, 2, 0.6): 0.768, (10, 2, 0.8): 0.840,
    (10, 4, 0.3): 0.999, (10, 4, 0.6): 0.999, (10, 4, 0.8): 1.000,
    (20, 1, 0.3): 0.002, (20, 1, 0.6): 0.024, (20, 1, 0.8): 0.156,
    (20, 2, 0.3): 0.493, (20, 2, 0.6): 0.670, (20, 2, 0.8): 0.792,
    (20, 4, 0.3): 0.999, (20, 4, 0.6): 0.999, (20, 4, 0.8): 0.999,
}

# MF importance sampler at m=1e3 and m=1e4 and naive MC at m=1e4: (d, a, rho) -> (est, sd)
MF_1E3 = {(20, 2, 0.6): (0.354, 0.064), (20, 4, 0.8): (0.514, 0.503), (10, 2, 0.8): (0.647, 0.293)}
MF_1E4 = {(20, 2, 0.6): (0.633, 0.047)}
NAIVE_1E4 = {(5, 2, 0.6): (0.847, 0.004)}

# limiting HR estimator, logistic margins, beta = (-0.5, 0.5): (d, rho) -> (rho, beta0, beta1)
HR_LOGISTIC = {
    (2, 0.3): (0.120, -0.499, 0.499), (2, 0.6): (0.255, -0.497, 0.497), (2, 0.8): (0.368, -0.493, 0.493),
    (5, 0.3): (0.120, -0.498, 0.498), (5, 0.6): (0.255, -0.491, 0.491), (5, 0.8): (0.368, -0.479, 0.479),
    (10, 0.3): (0.120, -0.496, 0.496), (10, 0.6): (0.255, -0.484, 0.484), (10, 0.8): (0.369, -0.467, 0.467),
}

# limiting HR estimator, NB2 margins, beta = (-0.5, 0.5), gamma = 0.5, truncation 10:
# (d, rho) -> (rho, beta0, beta1, gamma)
HR_NB2 = {
    (2, 0.3): (0.191, -0.498, 0.495, 0.480), (2, 0.6): (0.397, -0.492, 0.483, 0.410),
    (2, 0.8): (0.550, -0.481, 0.466, 0.302),
    (3, 0.3): (0.191, -0.497, 0.492, 0.468), (3, 0.6): (0.394, -0.484, 0.472, 0.361),
    (3, 0.8): (0.545, -0.466, 0.446, 0.214),
}

# limiting SEs, logistic: (d, rho) -> (ML b0, HR b0, ML b1, HR b1, ML rho, HR rho)
SE_LOGISTIC = {
    (2, 0.3): (.16, .15, .22, .21, .11, .07), (2, 0.6): (.17, .16, .24, .22, .08, .06),
    (2, 0.8): (.18, .16, .26, .22, .05, .06),
    (5, 0.3): (.12, .10, .17, .14, .05, .03), (5, 0.6): (.15, .11, .21, .16, .05, .03),
    (5, 0.8): (.17, .12, .23, .17, .03, .03),
    (10, 0.3): (.11, .08, .15, .11, .03, .02), (10, 0.6): (.14, .09, .19, .12, .04, .02),
    (10, 0.8): (.16, .09, .22, .13, .03, .02),
}

# limiting SEs, NB2: (d, rho) -> (ML b0, HR b0, ML b1, HR b1, ML gamma, HR gamma, ML rho, HR rho)
SE_NB2 = {
    (2, 0.3): (.11, .11, .15, .14, .15, .14, .08, .07), (2, 0.6): (.13, .11, .16, .15, .15, .13, .06, .06),
    (2, 0.8): (.13, .12, .17, .15, .17, .12, .04, .04),
    (3, 0.3): (.10, .09, .13, .12, .12, .11, .06, .04), (3, 0.6): (.12, .10, .15, .13, .13, .10, .05, .04),
    (3, 0.8): (.13, .10, .16, .13, .15, .09, .03, .03),
}

# parameter vector used by the toenail-like Markov design (intercept, trt, month, trt x month)
TOENAIL_BETA = (-0.587, -0.006, -0.208, -0.048)
TOENAIL_RHO = 0.952
