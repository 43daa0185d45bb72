"""Signal processing, model, training and inference services."""
