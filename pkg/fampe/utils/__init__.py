'''Utilities.'''
