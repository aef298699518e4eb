"""Material groupoids, material distributions and their foliations."""
