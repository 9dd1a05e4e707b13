# Test package for prep-hin
