# Computational engines: profiles, geometry, solver, analysis
