"""Fair multi-task prediction via Wasserstein barycenters."""
