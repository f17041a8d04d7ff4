# Services package initialization.
# One module per computational route: measure, asymptotic, exact_n, ensemble.
