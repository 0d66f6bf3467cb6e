# Monte Carlo studies for tobit log-symmetric models
