# FFT repetition analysis command
