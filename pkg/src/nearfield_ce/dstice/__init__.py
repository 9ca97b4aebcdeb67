"""D-STiCE: LSTM parameter tracker with a closed-form gain stage."""
